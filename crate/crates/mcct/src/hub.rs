//! Stream endpoint shared by agents and consoles.
//!
//! Every connection speaks the line protocol, either raw over TCP or as
//! WebSocket text frames (detected from the opening bytes). Connection
//! threads only decode and enqueue; all inbound traffic funnels into one
//! channel read by the coordinator loop.

use std::collections::HashMap;
use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use mcct_core::Message;
use tungstenite::Message as WsMessage;

use crate::wire::{encode, FrameDecoder, WireError};

pub type ConnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Lines,
    WebSocket,
}

#[derive(Debug)]
pub enum Ingress {
    Opened { conn: ConnId, peer: SocketAddr, transport: Transport },
    Message { conn: ConnId, msg: Message },
    Malformed { conn: ConnId, error: WireError },
    Closed { conn: ConnId },
}

struct Peer {
    out: Sender<Vec<u8>>,
    stream: TcpStream,
}

pub struct Hub {
    addr: SocketAddr,
    rx: Receiver<Ingress>,
    peers: Arc<Mutex<HashMap<ConnId, Peer>>>,
}

const WS_POLL: Duration = Duration::from_millis(1);

impl Hub {
    pub fn bind(addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let peers: Arc<Mutex<HashMap<ConnId, Peer>>> = Arc::default();
        let registry = Arc::clone(&peers);
        thread::Builder::new().name("mcct-accept".into()).spawn(move || {
            let mut next: ConnId = 0;
            for stream in listener.incoming() {
                let stream = match stream {
                    Ok(s) => s,
                    Err(e) => {
                        warn!("accept failed: {e}");
                        continue;
                    }
                };
                next += 1;
                if let Err(e) = open(next, stream, tx.clone(), &registry) {
                    warn!("connection {next} dropped during setup: {e}");
                }
            }
        })?;
        Ok(Self { addr: local, rx, peers })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Ingress> {
        match self.rx.recv_timeout(timeout) {
            Ok(i) => Some(i),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => None,
        }
    }

    pub fn try_recv(&self) -> Option<Ingress> {
        self.rx.try_recv().ok()
    }

    /// Queues `msg` for `conn`. False if the connection is gone or the
    /// message cannot be encoded.
    pub fn send(&self, conn: ConnId, msg: &Message) -> bool {
        let bytes = match encode(msg) {
            Ok(b) => b,
            Err(e) => {
                warn!("not sending to {conn}: {e}");
                return false;
            }
        };
        let peers = self.peers.lock().unwrap_or_else(|p| p.into_inner());
        peers.get(&conn).is_some_and(|p| p.out.send(bytes).is_ok())
    }

    /// Closes one connection.
    pub fn close(&self, conn: ConnId) {
        let mut peers = self.peers.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(p) = peers.remove(&conn) {
            let _ = p.stream.shutdown(Shutdown::Both);
        }
    }

    /// Flushes what is queued, then closes every connection.
    pub fn shutdown(&self) {
        let mut peers = self.peers.lock().unwrap_or_else(|p| p.into_inner());
        for (_, p) in peers.drain() {
            drop(p.out);
            // writer threads drain their queue before the socket goes
            thread::sleep(Duration::from_millis(5));
            let _ = p.stream.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for Hub {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn open(
    conn: ConnId,
    stream: TcpStream,
    tx: Sender<Ingress>,
    peers: &Arc<Mutex<HashMap<ConnId, Peer>>>,
) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let peer = stream.peer_addr()?;
    let (out_tx, out_rx) = mpsc::channel::<Vec<u8>>();
    let control = stream.try_clone()?;
    peers
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(conn, Peer { out: out_tx, stream: control });
    thread::Builder::new().name(format!("mcct-conn-{conn}")).spawn(move || {
        let mut head = [0u8; 4];
        let transport = match stream.peek(&mut head) {
            Ok(4) if &head == b"GET " => Transport::WebSocket,
            Ok(_) => Transport::Lines,
            Err(_) => {
                let _ = tx.send(Ingress::Closed { conn });
                return;
            }
        };
        let _ = tx.send(Ingress::Opened { conn, peer, transport });
        let result = match transport {
            Transport::Lines => serve_lines(conn, stream, &tx, out_rx),
            Transport::WebSocket => serve_ws(conn, stream, &tx, out_rx),
        };
        if let Err(e) = result {
            debug!("connection {conn} ended: {e}");
        }
        let _ = tx.send(Ingress::Closed { conn });
    })?;
    Ok(())
}

fn forward(conn: ConnId, decoder: &mut FrameDecoder, tx: &Sender<Ingress>) {
    while let Some(item) = decoder.next_message() {
        let _ = match item {
            Ok(msg) => tx.send(Ingress::Message { conn, msg }),
            Err(error) => tx.send(Ingress::Malformed { conn, error }),
        };
    }
}

fn serve_lines(conn: ConnId, mut stream: TcpStream, tx: &Sender<Ingress>, out: Receiver<Vec<u8>>) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    thread::spawn(move || {
        for bytes in out {
            if writer.write_all(&bytes).is_err() {
                break;
            }
        }
    });
    let mut decoder = FrameDecoder::new();
    let mut buf = [0u8; 16 * 1024];
    loop {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        decoder.push(&buf[..n]);
        forward(conn, &mut decoder, tx);
    }
}

fn serve_ws(conn: ConnId, stream: TcpStream, tx: &Sender<Ingress>, out: Receiver<Vec<u8>>) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::new(ErrorKind::InvalidData, e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(WS_POLL))?;
    let mut decoder = FrameDecoder::new();
    loop {
        loop {
            match out.try_recv() {
                Ok(bytes) => {
                    let text = String::from_utf8_lossy(&bytes).trim_end().to_owned();
                    ws.send(WsMessage::text(text)).map_err(ws_io)?;
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                decoder.push(text.as_bytes());
                if !text.ends_with('\n') {
                    decoder.push(b"\n");
                }
                forward(conn, &mut decoder, tx);
            }
            Ok(WsMessage::Binary(bytes)) => {
                decoder.push(&bytes);
                forward(conn, &mut decoder, tx);
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(ws_io(e)),
        }
    }
}

fn ws_io(e: tungstenite::Error) -> io::Error {
    io::Error::other(e.to_string())
}

/// Client side of the line transport: blocking connect with retries.
pub fn connect(addr: &str, attempts: u32, pause: Duration) -> io::Result<TcpStream> {
    let mut last = None;
    for _ in 0..attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => {
                last = Some(e);
                thread::sleep(pause);
            }
        }
    }
    Err(last.unwrap_or_else(|| io::Error::other("no connection attempt made")))
}
