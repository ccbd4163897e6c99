//! TCP and WebSocket front ends for [`Hub`].
//!
//! A single actor task owns the hub. Connection tasks forward received lines
//! to it over a channel and drain their own outbound queue, so every session
//! sees its messages in one total order regardless of transport.

use std::net::SocketAddr;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use crate::hub::{ConnId, Delivery, Hub, JournalEntry};

enum Outgoing {
    Line(String),
    Close,
}

enum Command {
    Connect { outbox: mpsc::UnboundedSender<Outgoing>, reply: oneshot::Sender<ConnId> },
    Line { conn: ConnId, line: String },
    Disconnect { conn: ConnId },
    Journal { reply: oneshot::Sender<Vec<JournalEntry>> },
}

#[derive(Debug, Clone, Copy)]
pub struct HubConfig {
    pub tcp: SocketAddr,
    pub ws: Option<SocketAddr>,
    pub journal: bool,
}

/// A running hub. Dropping it stops accepting and closes every connection.
pub struct HubServer {
    tcp_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    cmds: mpsc::UnboundedSender<Command>,
    tasks: Vec<JoinHandle<()>>,
}

impl HubServer {
    pub async fn start(cfg: HubConfig) -> std::io::Result<Self> {
        let tcp = TcpListener::bind(cfg.tcp).await?;
        let tcp_addr = tcp.local_addr()?;
        let ws = match cfg.ws {
            Some(addr) => Some(TcpListener::bind(addr).await?),
            None => None,
        };
        let ws_addr = ws.as_ref().map(|l| l.local_addr()).transpose()?;

        let (cmds, rx) = mpsc::unbounded_channel();
        let hub = if cfg.journal { Hub::with_journal() } else { Hub::new() };
        let mut tasks = vec![tokio::spawn(run_actor(hub, rx))];
        tasks.push(tokio::spawn(accept_tcp(tcp, cmds.clone())));
        if let Some(ws) = ws {
            tasks.push(tokio::spawn(accept_ws(ws, cmds.clone())));
        }
        log::info!("hub listening on tcp {tcp_addr}{}", ws_addr.map(|a| format!(", ws {a}")).unwrap_or_default());
        Ok(HubServer { tcp_addr, ws_addr, cmds, tasks })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    /// Receipts and broadcasts so far; empty unless the journal was enabled.
    pub async fn journal(&self) -> Vec<JournalEntry> {
        let (reply, rx) = oneshot::channel();
        if self.cmds.send(Command::Journal { reply }).is_err() {
            return Vec::new();
        }
        rx.await.unwrap_or_default()
    }

    /// Runs until the accept loops fail.
    pub async fn wait(mut self) {
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

impl Drop for HubServer {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn run_actor(mut hub: Hub, mut rx: mpsc::UnboundedReceiver<Command>) {
    let mut outboxes = std::collections::BTreeMap::new();
    while let Some(cmd) = rx.recv().await {
        let deliveries = match cmd {
            Command::Connect { outbox, reply } => {
                let id = hub.connect();
                outboxes.insert(id, outbox);
                let _ = reply.send(id);
                continue;
            }
            Command::Line { conn, line } => hub.receive(conn, &line),
            Command::Disconnect { conn } => {
                outboxes.remove(&conn);
                hub.disconnect(conn)
            }
            Command::Journal { reply } => {
                let _ = reply.send(hub.journal().to_vec());
                continue;
            }
        };
        for d in deliveries {
            match d {
                Delivery::Send(to, msg) => {
                    if let Some(tx) = outboxes.get(&to) {
                        let _ = tx.send(Outgoing::Line(msg.to_json()));
                    }
                }
                Delivery::Close(to) => {
                    if let Some(tx) = outboxes.remove(&to) {
                        let _ = tx.send(Outgoing::Close);
                    }
                    hub.disconnect(to);
                }
            }
        }
    }
}

async fn register(cmds: &mpsc::UnboundedSender<Command>) -> Option<(ConnId, mpsc::UnboundedReceiver<Outgoing>)> {
    let (outbox, out_rx) = mpsc::unbounded_channel();
    let (reply, rx) = oneshot::channel();
    cmds.send(Command::Connect { outbox, reply }).ok()?;
    Some((rx.await.ok()?, out_rx))
}

async fn accept_tcp(listener: TcpListener, cmds: mpsc::UnboundedSender<Command>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                log::debug!("tcp connection from {peer}");
                tokio::spawn(serve_tcp(stream, cmds.clone()));
            }
            Err(e) => log::warn!("tcp accept failed: {e}"),
        }
    }
}

async fn serve_tcp(stream: TcpStream, cmds: mpsc::UnboundedSender<Command>) {
    let Some((conn, mut out_rx)) = register(&cmds).await else { return };
    let _ = stream.set_nodelay(true);
    let (rd, mut wr) = stream.into_split();
    let writer = tokio::spawn(async move {
        while let Some(o) = out_rx.recv().await {
            match o {
                Outgoing::Line(mut l) => {
                    l.push('\n');
                    if wr.write_all(l.as_bytes()).await.is_err() {
                        break;
                    }
                }
                Outgoing::Close => break,
            }
        }
        let _ = wr.shutdown().await;
    });
    let mut lines = BufReader::new(rd).lines();
    let mut writer = writer;
    loop {
        tokio::select! {
            line = lines.next_line() => match line {
                Ok(Some(line)) => {
                    if cmds.send(Command::Line { conn, line }).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    log::debug!("read error on {conn:?}: {e}");
                    break;
                }
            },
            _ = &mut writer => break,
        }
    }
    let _ = cmds.send(Command::Disconnect { conn });
}

async fn accept_ws(listener: TcpListener, cmds: mpsc::UnboundedSender<Command>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                log::debug!("websocket connection from {peer}");
                tokio::spawn(serve_ws(stream, cmds.clone()));
            }
            Err(e) => log::warn!("websocket accept failed: {e}"),
        }
    }
}

async fn serve_ws(stream: TcpStream, cmds: mpsc::UnboundedSender<Command>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("websocket handshake failed: {e}");
            return;
        }
    };
    let Some((conn, mut out_rx)) = register(&cmds).await else { return };
    let (mut sink, mut source) = ws.split();
    let mut writer = tokio::spawn(async move {
        while let Some(o) = out_rx.recv().await {
            match o {
                Outgoing::Line(mut l) => {
                    l.push('\n');
                    if sink.send(Message::text(l)).await.is_err() {
                        break;
                    }
                }
                Outgoing::Close => break,
            }
        }
        let _ = sink.close().await;
    });
    loop {
        tokio::select! {
            frame = source.next() => match frame {
                Some(Ok(Message::Text(text))) => {
                    // a frame may carry several newline-separated messages
                    for line in text.as_str().lines() {
                        if cmds.send(Command::Line { conn, line: line.to_string() }).is_err() {
                            break;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            _ = &mut writer => break,
        }
    }
    let _ = cmds.send(Command::Disconnect { conn });
}
