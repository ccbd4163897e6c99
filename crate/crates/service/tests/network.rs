mod common;

use std::collections::BTreeMap;

use common::{start_hub, Client};
use disimo_core::cluster::{snapshot_of, MemberStatus};
use disimo_core::device::{Action, DeviceConfig};
use disimo_core::heartsim::HeartModel;
use disimo_core::Rgb;
use disimo_service::host::{run_networked, DeviceHost, HeartSource, NetworkOptions};
use disimo_service::hub::JournalEntry;
use disimo_service::wire::{ControlOp, WireMessage};
use futures::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

fn hello(id: &str, color: Rgb) -> WireMessage {
    WireMessage::Hello { device: id.into(), color, session: None }
}

fn status(id: &str, active: bool, coherent: bool) -> WireMessage {
    WireMessage::Status { device: id.into(), active, coherent }
}

fn brightness(m: &WireMessage) -> f64 {
    match m {
        WireMessage::Snapshot { brightness, .. } => *brightness,
        _ => panic!("not a snapshot"),
    }
}

#[tokio::test]
async fn three_coherent_members_light_fully() {
    let hub = start_hub(false).await;
    let colors = [Rgb::new(255, 0, 0), Rgb::new(0, 255, 0), Rgb::new(0, 0, 255)];
    let mut clients = Vec::new();
    for (i, c) in colors.iter().enumerate() {
        let mut cl = Client::connect(hub.tcp_addr()).await;
        cl.send(&hello(&format!("d{i}"), *c)).await;
        cl.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { members, .. } if *members == i + 1)).await;
        clients.push(cl);
    }
    for (i, cl) in clients.iter_mut().enumerate() {
        cl.send(&status(&format!("d{i}"), true, true)).await;
    }
    let last = clients[0].wait_snapshot(|m| matches!(m, WireMessage::Snapshot { active: 3, .. })).await;
    assert_eq!(last, WireMessage::Snapshot { color: Rgb::new(85, 85, 85), brightness: 1.0, active: 3, members: 3 });
    for cl in &mut clients[1..] {
        let m = cl.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { active: 3, .. })).await;
        assert_eq!(brightness(&m), 1.0);
    }
}

#[tokio::test]
async fn garbage_gets_an_error_and_the_connection_survives() {
    let hub = start_hub(false).await;
    let mut cl = Client::connect(hub.tcp_addr()).await;
    cl.send_raw("{{{ definitely not json").await;
    match cl.recv().await {
        Some(WireMessage::Error { code, .. }) => assert_eq!(code, "bad_msg"),
        other => panic!("expected error, got {other:?}"),
    }
    cl.send_raw(r#"{"type":"teleport"}"#).await;
    assert!(matches!(cl.recv().await, Some(WireMessage::Error { code, .. }) if code == "unknown_type"));
    cl.send(&hello("g", Rgb::new(1, 2, 3))).await;
    assert!(matches!(cl.recv().await, Some(WireMessage::Snapshot { members: 1, .. })));
}

#[tokio::test]
async fn dropping_a_connection_counts_as_bye() {
    let hub = start_hub(false).await;
    let mut a = Client::connect(hub.tcp_addr()).await;
    a.send(&hello("a", Rgb::new(200, 0, 0))).await;
    a.recv_snapshot().await;
    let mut b = Client::connect(hub.tcp_addr()).await;
    b.send(&hello("b", Rgb::new(0, 0, 200))).await;
    b.send(&status("b", true, false)).await;
    a.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { active: 1, members: 2, .. })).await;
    drop(b);
    let m = a.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { members: 1, .. })).await;
    assert_eq!(m, WireMessage::Snapshot { color: Rgb::BLACK, brightness: 0.0, active: 0, members: 1 });
    // the id is free again
    let mut c = Client::connect(hub.tcp_addr()).await;
    c.send(&hello("b", Rgb::new(0, 0, 200))).await;
    assert!(matches!(c.recv().await, Some(WireMessage::Snapshot { members: 2, .. })));
}

#[tokio::test]
async fn duplicate_id_is_rejected_and_closed() {
    let hub = start_hub(false).await;
    let mut a = Client::connect(hub.tcp_addr()).await;
    a.send(&hello("same", Rgb::new(1, 1, 1))).await;
    a.recv_snapshot().await;
    let mut b = Client::connect(hub.tcp_addr()).await;
    b.send(&hello("same", Rgb::new(2, 2, 2))).await;
    assert!(matches!(b.recv().await, Some(WireMessage::Error { code, .. }) if code == "dup_id"));
    assert_eq!(b.recv().await, None);
}

#[tokio::test]
async fn websocket_and_tcp_share_sessions() {
    let hub = start_hub(true).await;
    let url = format!("ws://{}", hub.ws_addr().unwrap());
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    ws.send(Message::text(hello("web", Rgb::new(10, 20, 30)).to_json())).await.unwrap();

    let mut next_ws = async || loop {
        let frame = tokio::time::timeout(common::WAIT, ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = frame {
            assert!(t.as_str().ends_with('\n'));
            return disimo_service::wire::parse_line(t.as_str()).unwrap();
        }
    };
    assert!(matches!(next_ws().await, WireMessage::Snapshot { members: 1, .. }));

    let mut tcp = Client::connect(hub.tcp_addr()).await;
    tcp.send(&hello("wired", Rgb::new(0, 0, 0))).await;
    tcp.send(&status("wired", true, true)).await;
    loop {
        if let WireMessage::Snapshot { active: 1, members: 2, brightness, .. } = next_ws().await {
            assert_eq!(brightness, 1.0);
            break;
        }
    }
}

#[tokio::test]
async fn device_host_against_hub() {
    let hub = start_hub(false).await;
    let mut ui = Client::connect(hub.tcp_addr()).await;
    ui.send(&hello("observer", Rgb::new(0, 0, 0))).await;
    ui.recv_snapshot().await;

    let model = HeartModel::paced(70.0, 0.125, 5);
    let host = DeviceHost::new("sim", DeviceConfig::with_color(Rgb::new(0, 200, 100)), HeartSource::synth(model)).unwrap();
    let opts = NetworkOptions {
        hub: hub.tcp_addr().to_string(),
        tick_hz: 1.0,
        accelerate: 20.0,
        duration: Some(60.0),
        ..Default::default()
    };
    let device = tokio::spawn(async move {
        let mut actions = Vec::new();
        run_networked(host, opts, |e| actions.extend(e.action().cloned())).await.map(|_| actions)
    });

    ui.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { members: 2, .. })).await;
    ui.send(&WireMessage::Control { device: "sim".into(), op: ControlOp::Grasp, value: None }).await;
    let lit = ui.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { active: 1, .. })).await;
    assert!(matches!(lit, WireMessage::Snapshot { color, .. } if color == Rgb::new(0, 200, 100)));
    ui.wait_snapshot(|m| brightness(m) == 1.0).await;

    let actions = device.await.unwrap().unwrap();
    assert!(actions.iter().any(|a| matches!(a, Action::FanOn)));
    // bye at the end of the run
    ui.wait_snapshot(|m| matches!(m, WireMessage::Snapshot { members: 1, .. })).await;
}

#[tokio::test]
async fn unreachable_hub_is_a_connect_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let host = DeviceHost::new("x", DeviceConfig::default(), HeartSource::synth(HeartModel::default())).unwrap();
    let opts = NetworkOptions {
        hub: addr.to_string(),
        connect_attempts: 2,
        initial_backoff: std::time::Duration::from_millis(10),
        ..Default::default()
    };
    let err = run_networked(host, opts, |_| {}).await.unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[tokio::test]
async fn journal_broadcasts_match_recomputation() {
    let hub = start_hub(false).await;
    let mut clients = Vec::new();
    for i in 0..4u8 {
        let mut cl = Client::connect(hub.tcp_addr()).await;
        let session = if i % 2 == 0 { None } else { Some("odd".to_string()) };
        cl.send(&WireMessage::Hello { device: format!("m{i}"), color: Rgb::new(60 * i, 255 - 60 * i, 7), session }).await;
        cl.recv_snapshot().await;
        clients.push(cl);
    }
    for round in 0..3 {
        for (i, cl) in clients.iter_mut().enumerate() {
            let active = (i + round) % 3 != 0;
            cl.send(&status(&format!("m{i}"), active, active && (i + round) % 2 == 0)).await;
        }
    }
    clients.pop();
    tokio::time::sleep(std::time::Duration::from_millis(200)).await;

    let journal = hub.journal().await;
    let mut members: BTreeMap<String, BTreeMap<String, MemberStatus>> = BTreeMap::new();
    let mut broadcasts = 0;
    for e in journal {
        match e {
            JournalEntry::Join { session, device, color } => {
                members.entry(session).or_default().insert(device.clone(), MemberStatus::new(device, color));
            }
            JournalEntry::Status { session, device, active, coherent } => {
                let m = members.get_mut(&session).unwrap().get_mut(&device).unwrap();
                *m = MemberStatus::new(device, m.color).with_flags(active, coherent);
            }
            JournalEntry::Leave { session, device } => {
                members.get_mut(&session).unwrap().remove(&device);
            }
            JournalEntry::Broadcast { session, snapshot } => {
                let expect = snapshot_of(members[&session].values());
                assert_eq!(snapshot, expect);
                broadcasts += 1;
            }
        }
    }
    assert!(broadcasts >= 4);
}
