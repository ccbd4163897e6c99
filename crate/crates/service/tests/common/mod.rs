#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use disimo_service::server::{HubConfig, HubServer};
use disimo_service::wire::{parse_line, WireMessage};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

pub const WAIT: Duration = Duration::from_secs(5);

pub async fn start_hub(ws: bool) -> HubServer {
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    HubServer::start(HubConfig { tcp: any, ws: ws.then_some(any), journal: true }).await.unwrap()
}

pub struct Client {
    lines: Lines<BufReader<OwnedReadHalf>>,
    wr: OwnedWriteHalf,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Client {
        let s = TcpStream::connect(addr).await.unwrap();
        let (rd, wr) = s.into_split();
        Client { lines: BufReader::new(rd).lines(), wr }
    }

    pub async fn send_raw(&mut self, line: &str) {
        self.wr.write_all(line.as_bytes()).await.unwrap();
        self.wr.write_all(b"\n").await.unwrap();
    }

    pub async fn send(&mut self, msg: &WireMessage) {
        self.wr.write_all(msg.to_line().as_bytes()).await.unwrap();
    }

    /// Next message, or `None` on a clean close.
    pub async fn recv(&mut self) -> Option<WireMessage> {
        let line = tokio::time::timeout(WAIT, self.lines.next_line()).await.expect("timed out").ok()??;
        Some(parse_line(&line).expect("hub sends valid messages"))
    }

    pub async fn recv_snapshot(&mut self) -> WireMessage {
        loop {
            let m = self.recv().await.expect("connection closed");
            if matches!(m, WireMessage::Snapshot { .. }) {
                return m;
            }
        }
    }

    /// Waits for the first snapshot satisfying `pred`.
    pub async fn wait_snapshot(&mut self, pred: impl Fn(&WireMessage) -> bool) -> WireMessage {
        loop {
            let m = self.recv_snapshot().await;
            if pred(&m) {
                return m;
            }
        }
    }
}
