//! Little-endian helpers shared by the binary file formats.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{self, Read, Write};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn bytes(&mut self, n: usize) -> io::Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!(
                    "need {} bytes at offset {}, {} left",
                    n,
                    self.pos,
                    self.remaining()
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> io::Result<u8> {
        self.bytes(1).map(|b| b[0])
    }

    pub(crate) fn u16(&mut self) -> io::Result<u16> {
        self.bytes(2)?.read_u16::<LittleEndian>()
    }

    pub(crate) fn u32(&mut self) -> io::Result<u32> {
        self.bytes(4)?.read_u32::<LittleEndian>()
    }

    pub(crate) fn u64(&mut self) -> io::Result<u64> {
        self.bytes(8)?.read_u64::<LittleEndian>()
    }

    pub(crate) fn f32s(&mut self, n: usize) -> io::Result<Vec<f32>> {
        let mut raw = self.bytes(n.checked_mul(4).ok_or_else(overflow)?)?;
        let mut out = vec![0f32; n];
        raw.read_f32_into::<LittleEndian>(&mut out)?;
        Ok(out)
    }

    pub(crate) fn f64(&mut self) -> io::Result<f64> {
        self.bytes(8)?.read_f64::<LittleEndian>()
    }

    pub(crate) fn f64s(&mut self, n: usize) -> io::Result<Vec<f64>> {
        let mut raw = self.bytes(n.checked_mul(8).ok_or_else(overflow)?)?;
        let mut out = vec![0f64; n];
        raw.read_f64_into::<LittleEndian>(&mut out)?;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> io::Result<()> {
        let got = self.bytes(4)?;
        if got != expected {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }
}

fn overflow() -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, "length overflow")
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn peek_magic(buf: &[u8]) -> Option<[u8; 4]> {
    let mut m = [0u8; 4];
    let mut r = buf;
    r.read_exact(&mut m).ok()?;
    Some(m)
}
