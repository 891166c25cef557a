//! Length-prefixed binary protocol between a client and one PIR replica.
//!
//! Request: `u8 opcode`, `u32 length`, payload. Opcode `0x01` is an XOR
//! query: `length` is the indicator's bit length and `ceil(length / 8)`
//! packed bytes follow. Opcode `0x02` is a plaintext query: `length` is the
//! 1-based target and there is no payload. The reply is the 32-byte answer
//! digest. A server that cannot answer closes the connection. Several
//! requests may be sent on one connection, one at a time.

use std::io::{self, Read, Write};

use crate::merkle::{Digest, DIGEST_LEN};
use crate::pir::{Indicator, ServerRequest};

pub const OP_XOR: u8 = 0x01;
pub const OP_PLAIN: u8 = 0x02;

/// TCP port of `replica` (1 or 2) of `color` when a height-`h` deployment
/// listens from `base`: replica 1 on `base..base+h`, replica 2 right after.
pub fn port_for(base: u16, h: u32, color: u16, replica: usize) -> Option<u16> {
    let off = (replica as u32 - 1) * h + u32::from(color) - 1;
    u16::try_from(u32::from(base) + off).ok()
}

pub fn encode_request(req: &ServerRequest) -> Result<Vec<u8>, io::Error> {
    match req {
        ServerRequest::Xor(ind) => {
            let len = u32::try_from(ind.len()).map_err(|_| invalid("indicator longer than u32"))?;
            let mut out = Vec::with_capacity(5 + ind.as_bytes().len());
            out.push(OP_XOR);
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(ind.as_bytes());
            Ok(out)
        }
        ServerRequest::Plain(t) => {
            let t = u32::try_from(*t).map_err(|_| invalid("target larger than u32"))?;
            let mut out = vec![OP_PLAIN];
            out.extend_from_slice(&t.to_be_bytes());
            Ok(out)
        }
    }
}

/// Splits a request header into opcode and length.
pub fn parse_header(head: [u8; 5]) -> (u8, u32) {
    (head[0], u32::from_be_bytes(head[1..5].try_into().unwrap()))
}

/// Bytes of payload that follow a header.
pub fn payload_len(opcode: u8, length: u32) -> io::Result<usize> {
    match opcode {
        OP_XOR => Ok((length as usize).div_ceil(8)),
        OP_PLAIN => Ok(0),
        other => Err(invalid(&format!("unknown opcode {other:#04x}"))),
    }
}

pub fn decode_request(opcode: u8, length: u32, payload: Vec<u8>) -> io::Result<ServerRequest> {
    match opcode {
        OP_XOR => Indicator::from_bytes(u64::from(length), payload)
            .map(ServerRequest::Xor)
            .map_err(|e| invalid(&e.to_string())),
        OP_PLAIN => Ok(ServerRequest::Plain(u64::from(length))),
        other => Err(invalid(&format!("unknown opcode {other:#04x}"))),
    }
}

/// Reads one request; `None` on a clean end of stream.
pub fn read_request<R: Read>(r: &mut R) -> io::Result<Option<ServerRequest>> {
    let mut head = [0u8; 5];
    match r.read_exact(&mut head[..1]) {
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        other => other?,
    }
    r.read_exact(&mut head[1..])?;
    let (op, len) = parse_header(head);
    let mut payload = vec![0; payload_len(op, len)?];
    r.read_exact(&mut payload)?;
    decode_request(op, len, payload).map(Some)
}

pub fn write_request<W: Write>(w: &mut W, req: &ServerRequest) -> io::Result<()> {
    w.write_all(&encode_request(req)?)?;
    w.flush()
}

pub fn read_answer<R: Read>(r: &mut R) -> io::Result<Digest> {
    let mut d = [0u8; DIGEST_LEN];
    r.read_exact(&mut d)?;
    Ok(Digest(d))
}

pub fn write_answer<W: Write>(w: &mut W, d: &Digest) -> io::Result<()> {
    w.write_all(&d.0)?;
    w.flush()
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frames() {
        let ind = Indicator::from_positions(10, &[1, 9, 10]).unwrap();
        let bytes = encode_request(&ServerRequest::Xor(ind.clone())).unwrap();
        assert_eq!(bytes, vec![0x01, 0, 0, 0, 10, 0x80, 0xC0]);
        assert_eq!(
            encode_request(&ServerRequest::Plain(300)).unwrap(),
            vec![0x02, 0, 0, 1, 44]
        );

        let mut stream = bytes.clone();
        stream.extend(encode_request(&ServerRequest::Plain(3)).unwrap());
        let mut cur = Cursor::new(stream);
        assert_eq!(
            read_request(&mut cur).unwrap(),
            Some(ServerRequest::Xor(ind))
        );
        assert_eq!(
            read_request(&mut cur).unwrap(),
            Some(ServerRequest::Plain(3))
        );
        assert_eq!(read_request(&mut cur).unwrap(), None);
    }

    #[test]
    fn malformed_frames() {
        assert!(read_request(&mut Cursor::new(vec![0x07, 0, 0, 0, 0])).is_err());
        assert!(read_request(&mut Cursor::new(vec![0x01, 0, 0, 0, 10, 0x80])).is_err());
        assert!(read_request(&mut Cursor::new(vec![0x01, 0, 0, 0, 10, 0x80, 0xC1])).is_err());
        assert!(read_request(&mut Cursor::new(vec![0x02, 0, 0])).is_err());
    }

    #[test]
    fn answers() {
        let mut buf = Vec::new();
        write_answer(&mut buf, &Digest([9; 32])).unwrap();
        assert_eq!(read_answer(&mut Cursor::new(buf)).unwrap(), Digest([9; 32]));
    }

    #[test]
    fn port_layout() {
        assert_eq!(port_for(9000, 3, 1, 1), Some(9000));
        assert_eq!(port_for(9000, 3, 3, 1), Some(9002));
        assert_eq!(port_for(9000, 3, 1, 2), Some(9003));
        assert_eq!(port_for(65535, 3, 2, 1), None);
    }
}
