//! Length-prefixed binary framing for the swap protocol.
//!
//! ```text
//! frame    = len:u32le | body
//! request  = op:u8 (0x01 PULL, 0x02 PUSH_SWAP, 0x03 SHUTDOWN) | node:u32le | dim:u32le | dim × f64le
//! response = 0x81 | t:u64le | dim:u32le | dim × f64le
//! error    = 0xFF | code:u16le | utf-8 message
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const OP_PULL: u8 = 0x01;
pub const OP_PUSH_SWAP: u8 = 0x02;
pub const OP_SHUTDOWN: u8 = 0x03;
pub const OP_OK: u8 = 0x81;
pub const OP_ERROR: u8 = 0xFF;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME: u32 = 64 << 20;

pub const ERR_BAD_OPCODE: u16 = 1;
pub const ERR_MALFORMED: u16 = 2;
pub const ERR_REJECTED: u16 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum Request {
    Pull { node: u32 },
    PushSwap { node: u32, theta: Vec<f64> },
    Shutdown { node: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Ok { t: u64, theta: Vec<f64> },
    Error { code: u16, message: String },
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let (op, node, theta): (u8, u32, &[f64]) = match self {
            Request::Pull { node } => (OP_PULL, *node, &[]),
            Request::PushSwap { node, theta } => (OP_PUSH_SWAP, *node, theta),
            Request::Shutdown { node } => (OP_SHUTDOWN, *node, &[]),
        };
        let mut body = Vec::with_capacity(9 + 8 * theta.len());
        body.push(op);
        body.extend_from_slice(&node.to_le_bytes());
        body.extend_from_slice(&(theta.len() as u32).to_le_bytes());
        for v in theta {
            body.extend_from_slice(&v.to_le_bytes());
        }
        frame(body)
    }

    pub fn decode(body: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(body);
        let op = cur.u8()?;
        let node = cur.u32()?;
        let dim = cur.u32()? as usize;
        let theta = cur.f64s(dim)?;
        cur.finish()?;
        match op {
            OP_PULL | OP_SHUTDOWN if dim != 0 => Err(Error::Protocol(format!(
                "opcode {op:#04x} must carry dim 0, got {dim}"
            ))),
            OP_PULL => Ok(Request::Pull { node }),
            OP_SHUTDOWN => Ok(Request::Shutdown { node }),
            OP_PUSH_SWAP => Ok(Request::PushSwap { node, theta }),
            other => Err(Error::Protocol(format!("unknown opcode {other:#04x}"))),
        }
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Response::Ok { t, theta } => {
                body.push(OP_OK);
                body.extend_from_slice(&t.to_le_bytes());
                body.extend_from_slice(&(theta.len() as u32).to_le_bytes());
                for v in theta {
                    body.extend_from_slice(&v.to_le_bytes());
                }
            }
            Response::Error { code, message } => {
                body.push(OP_ERROR);
                body.extend_from_slice(&code.to_le_bytes());
                body.extend_from_slice(message.as_bytes());
            }
        }
        frame(body)
    }

    pub fn decode(body: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(body);
        match cur.u8()? {
            OP_OK => {
                let t = cur.u64()?;
                let dim = cur.u32()? as usize;
                let theta = cur.f64s(dim)?;
                cur.finish()?;
                Ok(Response::Ok { t, theta })
            }
            OP_ERROR => {
                let code = cur.u16()?;
                let message = String::from_utf8(cur.rest().to_vec())
                    .map_err(|_| Error::Protocol("error message is not utf-8".into()))?;
                Ok(Response::Error { code, message })
            }
            other => Err(Error::Protocol(format!("unknown response opcode {other:#04x}"))),
        }
    }
}

fn frame(body: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend(body);
    out
}

/// Bytes on the wire for a request/response pair carrying `req` and `resp` doubles.
pub fn exchange_bytes(req_doubles: usize, resp_doubles: usize) -> usize {
    (4 + 9 + 8 * req_doubles) + (4 + 13 + 8 * resp_doubles)
}

/// Reads one frame body; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_frame(w: &mut impl Write, framed: &[u8]) -> Result<()> {
    w.write_all(framed)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Protocol("truncated frame".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Protocol("dim overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{} trailing bytes in frame",
                self.buf.len() - self.pos
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pull_layout_is_bit_exact() {
        let bytes = Request::Pull { node: 7 }.encode();
        assert_eq!(bytes, vec![9, 0, 0, 0, 0x01, 7, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn push_layout_is_bit_exact() {
        let bytes = Request::PushSwap {
            node: 1,
            theta: vec![1.0],
        }
        .encode();
        let mut expected = vec![17, 0, 0, 0, 0x02, 1, 0, 0, 0, 1, 0, 0, 0];
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn error_response_layout() {
        let bytes = Response::Error {
            code: 3,
            message: "no".into(),
        }
        .encode();
        assert_eq!(bytes, vec![5, 0, 0, 0, 0xFF, 3, 0, b'n', b'o']);
    }

    #[test]
    fn exchange_bytes_matches_encodings() {
        let req = Request::PushSwap {
            node: 0,
            theta: vec![0.0; 4],
        }
        .encode();
        let resp = Response::Ok {
            t: 9,
            theta: vec![0.0; 4],
        }
        .encode();
        assert_eq!(exchange_bytes(4, 4), req.len() + resp.len());
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        assert!(Request::decode(&[0x02, 0, 0, 0, 0, 1, 0, 0, 0]).is_err());
        assert!(Request::decode(&[0x01, 0, 0, 0, 0, 0, 0, 0, 0, 9]).is_err());
        assert!(Request::decode(&[0x07, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn request_round_trips(node in any::<u32>(), theta in proptest::collection::vec(any::<f64>(), 0..16)) {
            let req = Request::PushSwap { node, theta };
            let framed = req.encode();
            let body = read_frame(&mut framed.as_slice()).unwrap().unwrap();
            let back = Request::decode(&body).unwrap();
            // Compare bit patterns so NaN payloads count as equal.
            let bits = |r: &Request| match r {
                Request::PushSwap { node, theta } => (*node, theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>()),
                _ => unreachable!(),
            };
            prop_assert_eq!(bits(&back), bits(&req));
        }

        #[test]
        fn response_round_trips(t in any::<u64>(), theta in proptest::collection::vec(-1e9f64..1e9, 0..16)) {
            let resp = Response::Ok { t, theta };
            let framed = resp.encode();
            let body = read_frame(&mut framed.as_slice()).unwrap().unwrap();
            prop_assert_eq!(Response::decode(&body).unwrap(), resp);
        }
    }
}
