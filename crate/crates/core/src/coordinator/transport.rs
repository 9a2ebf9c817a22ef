//! In-process and TCP access to a [`SwapServer`].

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use super::server::SwapServer;
use super::wire::{self, Request, Response};
use crate::error::{Error, Result};
use crate::learners::Theta;

/// Answer to a pull or push: the returned parameter, the server's `t` after
/// the call and the bytes exchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub theta: Theta,
    pub t: u64,
    pub bytes: usize,
}

/// How a node reaches the server.
pub trait Transport {
    fn pull(&mut self, node_id: usize) -> Result<Reply>;
    fn push_swap(&mut self, node_id: usize, theta: &Theta) -> Result<Reply>;
}

/// Direct calls on a shared server.
///
/// Byte counts are those the TCP encoding would use for the same exchange.
#[derive(Clone, Debug)]
pub struct InProcess {
    server: Arc<SwapServer>,
}

impl InProcess {
    pub fn new(server: Arc<SwapServer>) -> Self {
        Self { server }
    }

    pub fn server(&self) -> &Arc<SwapServer> {
        &self.server
    }
}

impl Transport for InProcess {
    fn pull(&mut self, node_id: usize) -> Result<Reply> {
        let (theta, t) = self.server.pull(node_id);
        let bytes = wire::exchange_bytes(0, theta.as_slice().len());
        Ok(Reply { theta, t, bytes })
    }

    fn push_swap(&mut self, node_id: usize, theta: &Theta) -> Result<Reply> {
        let (prev, t) = self.server.push_swap_indexed(node_id, theta.clone())?;
        let bytes = wire::exchange_bytes(theta.as_slice().len(), prev.as_slice().len());
        Ok(Reply {
            theta: prev,
            t,
            bytes,
        })
    }
}

/// Client side of the TCP transport; one connection serves any node ids.
#[derive(Debug)]
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    fn call(&mut self, req: &Request) -> Result<(u64, Vec<f64>, usize)> {
        let framed = req.encode();
        wire::write_frame(&mut self.writer, &framed)?;
        let body = wire::read_frame(&mut self.reader)?
            .ok_or_else(|| Error::Protocol("server closed the connection".into()))?;
        match Response::decode(&body)? {
            Response::Ok { t, theta } => Ok((t, theta, framed.len() + 4 + body.len())),
            Response::Error { code, message } => Err(Error::Remote { code, message }),
        }
    }

    /// Asks the server to stop accepting connections.
    pub fn shutdown(mut self, node_id: usize) -> Result<()> {
        self.call(&Request::Shutdown {
            node: node_id as u32,
        })
        .map(|_| ())
    }
}

impl Transport for TcpTransport {
    fn pull(&mut self, node_id: usize) -> Result<Reply> {
        let (t, theta, bytes) = self.call(&Request::Pull {
            node: node_id as u32,
        })?;
        Ok(Reply {
            theta: Theta::from_vec(theta)?,
            t,
            bytes,
        })
    }

    fn push_swap(&mut self, node_id: usize, theta: &Theta) -> Result<Reply> {
        let (t, prev, bytes) = self.call(&Request::PushSwap {
            node: node_id as u32,
            theta: theta.as_slice().to_vec(),
        })?;
        Ok(Reply {
            theta: Theta::from_vec(prev)?,
            t,
            bytes,
        })
    }
}

/// A [`SwapServer`] listening on TCP, one thread per connection.
#[derive(Debug)]
pub struct TcpServerHandle {
    addr: SocketAddr,
    server: Arc<SwapServer>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl TcpServerHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn spawn(addr: impl ToSocketAddrs, theta_init: Theta) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let server = Arc::new(SwapServer::new(theta_init));
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let server = Arc::clone(&server);
            let stop = Arc::clone(&stop);
            thread::spawn(move || accept_loop(listener, addr, server, stop))
        };
        Ok(Self {
            addr,
            server,
            stop,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn server(&self) -> &Arc<SwapServer> {
        &self.server
    }

    /// Stops accepting and waits for the acceptor thread.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake a blocked accept().
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for TcpServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_and_join();
        }
    }
}

fn accept_loop(listener: TcpListener, addr: SocketAddr, server: Arc<SwapServer>, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(stream) => {
                let server = Arc::clone(&server);
                let stop = Arc::clone(&stop);
                thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, addr, &server, &stop) {
                        debug!("connection ended: {e}");
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn serve_connection(
    stream: TcpStream,
    addr: SocketAddr,
    server: &SwapServer,
    stop: &AtomicBool,
) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(body) = wire::read_frame(&mut reader)? {
        let (response, shutdown) = match Request::decode(&body) {
            Err(e) => {
                let code = if body.first().is_some_and(|op| !(0x01..=0x03).contains(op)) {
                    wire::ERR_BAD_OPCODE
                } else {
                    wire::ERR_MALFORMED
                };
                (
                    Response::Error {
                        code,
                        message: e.to_string(),
                    },
                    false,
                )
            }
            Ok(Request::Pull { node }) => {
                let (theta, t) = server.pull(node as usize);
                (
                    Response::Ok {
                        t,
                        theta: theta.into_vec(),
                    },
                    false,
                )
            }
            Ok(Request::PushSwap { node, theta }) => {
                let pushed = Theta::from_vec(theta);
                let result = pushed.and_then(|p| server.push_swap_indexed(node as usize, p));
                match result {
                    Ok((prev, t)) => (
                        Response::Ok {
                            t,
                            theta: prev.into_vec(),
                        },
                        false,
                    ),
                    Err(e) => (
                        Response::Error {
                            code: wire::ERR_REJECTED,
                            message: e.to_string(),
                        },
                        false,
                    ),
                }
            }
            Ok(Request::Shutdown { .. }) => (
                Response::Ok {
                    t: server.t(),
                    theta: Vec::new(),
                },
                true,
            ),
        };
        wire::write_frame(&mut writer, &response.encode())?;
        if shutdown {
            stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(addr);
            break;
        }
    }
    Ok(())
}
