use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::{decode, encode, read_frame, write_frame, DecodeError, EncodeError, Message};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("link {link}: timed out waiting for a message")]
    Timeout { link: String },
    #[error("link {link}: peer closed")]
    Closed { link: String },
    #[error("link {link}: {source}")]
    Io {
        link: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("link {link}: {source}")]
    Decode { link: String, source: DecodeError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Self::Inproc),
            "tcp" => Ok(Self::Tcp),
            other => Err(format!("unknown transport {other:?} (expected inproc or tcp)")),
        }
    }
}

enum Channel {
    Inproc {
        tx: Sender<Vec<u8>>,
        rx: Receiver<Vec<u8>>,
    },
    Tcp {
        reader: BufReader<TcpStream>,
        writer: BufWriter<TcpStream>,
        timeout: Option<Duration>,
    },
}

/// One end of a bidirectional, FIFO, byte-framed link. Every message is
/// encoded to its wire frame before it leaves, whichever transport is used.
pub struct Endpoint {
    name: String,
    channel: Channel,
}

impl Endpoint {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Sends `msg` and returns the number of framed bytes written.
    pub fn send(&mut self, msg: &Message) -> Result<usize, TransportError> {
        let frame = encode(msg)?;
        let n = frame.len();
        match &mut self.channel {
            Channel::Inproc { tx, .. } => tx.send(frame).map_err(|_| TransportError::Closed {
                link: self.name.clone(),
            })?,
            Channel::Tcp { writer, .. } => {
                write_frame(writer, &frame).map_err(|e| io_error(&self.name, e))?
            }
        }
        Ok(n)
    }

    /// Blocks for the next message; `None` waits forever.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, TransportError> {
        let frame = match &mut self.channel {
            Channel::Inproc { rx, .. } => match timeout {
                Some(t) => rx.recv_timeout(t).map_err(|e| match e {
                    RecvTimeoutError::Timeout => TransportError::Timeout {
                        link: self.name.clone(),
                    },
                    RecvTimeoutError::Disconnected => TransportError::Closed {
                        link: self.name.clone(),
                    },
                })?,
                None => rx.recv().map_err(|_| TransportError::Closed {
                    link: self.name.clone(),
                })?,
            },
            Channel::Tcp {
                reader,
                timeout: current,
                ..
            } => {
                if *current != timeout {
                    reader
                        .get_ref()
                        .set_read_timeout(timeout)
                        .map_err(|e| io_error(&self.name, e))?;
                    *current = timeout;
                }
                read_frame(reader).map_err(|e| io_error(&self.name, e))?
            }
        };
        decode(&frame).map_err(|source| TransportError::Decode {
            link: self.name.clone(),
            source,
        })
    }
}

fn io_error(link: &str, e: std::io::Error) -> TransportError {
    let link = link.to_string();
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout { link },
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
            TransportError::Closed { link }
        }
        _ => TransportError::Io { link, source: e },
    }
}

/// Creates a connected pair of endpoints named `name`. For TCP this binds an
/// ephemeral loopback port, connects, and accepts exactly one peer.
pub fn link_pair(kind: TransportKind, name: &str) -> Result<(Endpoint, Endpoint), TransportError> {
    let channels = match kind {
        TransportKind::Inproc => {
            let (tx_a, rx_b) = mpsc::channel();
            let (tx_b, rx_a) = mpsc::channel();
            (
                Channel::Inproc { tx: tx_a, rx: rx_a },
                Channel::Inproc { tx: tx_b, rx: rx_b },
            )
        }
        TransportKind::Tcp => {
            let io = |e| io_error(name, e);
            let listener = TcpListener::bind("127.0.0.1:0").map_err(io)?;
            let addr = listener.local_addr().map_err(io)?;
            let a = TcpStream::connect(addr).map_err(io)?;
            let (b, _) = listener.accept().map_err(io)?;
            let mut out = Vec::with_capacity(2);
            for s in [a, b] {
                s.set_nodelay(true).map_err(io)?;
                out.push(Channel::Tcp {
                    reader: BufReader::new(s.try_clone().map_err(io)?),
                    writer: BufWriter::new(s),
                    timeout: None,
                });
            }
            let b = out.pop().expect("two streams");
            let a = out.pop().expect("two streams");
            (a, b)
        }
    };
    Ok((
        Endpoint {
            name: name.to_string(),
            channel: channels.0,
        },
        Endpoint {
            name: name.to_string(),
            channel: channels.1,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::codec::Control;

    fn exchange(kind: TransportKind) {
        let (mut a, mut b) = link_pair(kind, "node-0").unwrap();
        for r in 0..5 {
            a.send(&Message::control(r, Control::Start)).unwrap();
        }
        for r in 0..5 {
            assert_eq!(b.recv(None).unwrap().round, r);
        }
        b.send(&Message::control(9, Control::Shutdown)).unwrap();
        assert_eq!(a.recv(None).unwrap(), Message::control(9, Control::Shutdown));
    }

    #[test]
    fn inproc_is_fifo() {
        exchange(TransportKind::Inproc);
    }

    #[test]
    fn tcp_is_fifo() {
        exchange(TransportKind::Tcp);
    }

    #[test]
    fn timeout_names_link() {
        for kind in [TransportKind::Inproc, TransportKind::Tcp] {
            let (mut a, _b) = link_pair(kind, "node-3").unwrap();
            let err = a.recv(Some(Duration::from_millis(20))).unwrap_err();
            assert!(
                matches!(&err, TransportError::Timeout { link } if link == "node-3"),
                "{err}"
            );
        }
    }

    #[test]
    fn dropped_peer_is_closed() {
        let (mut a, b) = link_pair(TransportKind::Inproc, "n").unwrap();
        drop(b);
        assert!(matches!(
            a.recv(None),
            Err(TransportError::Closed { .. })
        ));
    }

    #[test]
    fn kind_parses() {
        assert_eq!("tcp".parse::<TransportKind>().unwrap(), TransportKind::Tcp);
        assert!("udp".parse::<TransportKind>().is_err());
    }
}
