//! NPY v1.0 encoding and decoding over byte buffers.
//!
//! Writes produce exactly the bytes `numpy.save` emits for a C-order little-endian
//! `float32` array, including the growth-axis padding numpy adds to the header.
//! Reads accept format versions 1.0 through 3.0, `f4`/`f8` in either byte order, and
//! narrow `f8` payloads to `f32`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

const ARRAY_ALIGN: usize = 64;
const GROWTH_AXIS_MAX_DIGITS: usize = 21;

/// A dense row-major `f32` array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ArrayFile {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let arr = ArrayFile { shape, data };
        arr.validate()?;
        Ok(arr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() {
            return Err(Error::Format("rank-0 arrays are not supported".into()));
        }
        let n = element_count(&self.shape).ok_or_else(|| Error::Format(format!("shape {:?} overflows", self.shape)))?;
        if n != self.data.len() {
            return Err(Error::Corrupt(format!(
                "shape {:?} holds {n} elements, payload has {}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Dictionary header, as written by `numpy.lib.format`.
pub fn header_dict(shape: &[usize]) -> String {
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    };
    let mut dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
    let first = shape.first().map_or(0, |d| d.to_string().len());
    if !shape.is_empty() {
        dict.extend(core::iter::repeat_n(' ', GROWTH_AXIS_MAX_DIGITS.saturating_sub(first)));
    }
    dict
}

pub fn encode(arr: &ArrayFile) -> Result<Vec<u8>> {
    arr.validate()?;
    let dict = header_dict(&arr.shape);
    // magic (6) + version (2) + header length (2) + dict + padding + '\n'
    let hlen = dict.len() + 1;
    let pad = ARRAY_ALIGN - (10 + hlen) % ARRAY_ALIGN;
    let total_header = hlen + pad;
    let header_len = u16::try_from(total_header).map_err(|_| Error::Format("header too long for NPY v1.0".into()))?;

    let mut out = Vec::with_capacity(10 + total_header + arr.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(core::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    for v in &arr.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, PartialEq)]
struct Header {
    dtype: Dtype,
    endian: Endian,
    fortran_order: bool,
    shape: Vec<usize>,
}

pub fn decode(bytes: &[u8]) -> Result<ArrayFile> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, prefix) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10usize),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated NPY prefix".into()));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        _ => return Err(Error::Format(format!("unsupported NPY version {major}.{minor}"))),
    };
    let header_end = prefix
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("header extends past end of file".into()))?;
    let text = core::str::from_utf8(&bytes[prefix..header_end])
        .map_err(|_| Error::Format("header is not valid text".into()))?;
    let header = parse_header(text)?;
    if header.fortran_order {
        return Err(Error::Format("Fortran-order arrays are not supported".into()));
    }
    if header.shape.is_empty() {
        return Err(Error::Format("rank-0 arrays are not supported".into()));
    }

    let count =
        element_count(&header.shape).ok_or_else(|| Error::Format(format!("shape {:?} overflows", header.shape)))?;
    let width = match header.dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let payload = &bytes[header_end..];
    let expected = count.checked_mul(width).ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Corrupt(format!(
            "shape {:?} needs {expected} payload bytes, found {}",
            header.shape,
            payload.len()
        )));
    }

    let data: Vec<f32> = match (header.dtype, header.endian) {
        (Dtype::F4, Endian::Little) => {
            payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()
        }
        (Dtype::F4, Endian::Big) => {
            payload.chunks_exact(4).map(|b| f32::from_be_bytes([b[0], b[1], b[2], b[3]])).collect()
        }
        (Dtype::F8, endian) => payload
            .chunks_exact(8)
            .map(|b| {
                let raw = [b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]];
                let v = match endian {
                    Endian::Little => f64::from_le_bytes(raw),
                    Endian::Big => f64::from_be_bytes(raw),
                };
                v as f32
            })
            .collect(),
    };
    Ok(ArrayFile { shape: header.shape, data })
}

/// Minimal reader for the Python-literal dictionary in the header.
struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, ch: u8) -> bool {
        if self.peek() == Some(ch) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        if self.eat(ch) {
            Ok(())
        } else {
            Err(Error::Format(format!("expected '{}' at header offset {}", ch as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<&'a str> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(Error::Format("expected quoted string in header".into())),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Err(Error::Format("unterminated string in header".into()));
        }
        let out = core::str::from_utf8(&self.s[start..self.pos])
            .map_err(|_| Error::Format("header is not valid text".into()))?;
        self.pos += 1;
        Ok(out)
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.eat(b')') {
                return Ok(dims);
            }
            let w = self.word();
            // numpy on some platforms writes `3L`
            let digits = w.trim_end_matches('L');
            let d = digits.parse::<usize>().map_err(|_| Error::Format(format!("bad shape entry '{w}'")))?;
            dims.push(d);
            if !self.eat(b',') {
                self.expect(b')')?;
                return Ok(dims);
            }
        }
    }
}

fn parse_header(text: &str) -> Result<Header> {
    let mut cur = Cursor { s: text.as_bytes(), pos: 0 };
    cur.expect(b'{')?;
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    loop {
        if cur.eat(b'}') {
            break;
        }
        let key = cur.string()?;
        cur.expect(b':')?;
        match key {
            "descr" => descr = Some(cur.string()?),
            "fortran_order" => {
                fortran = Some(match cur.word() {
                    "True" => true,
                    "False" => false,
                    other => return Err(Error::Format(format!("bad fortran_order '{other}'"))),
                })
            }
            "shape" => shape = Some(cur.tuple()?),
            other => return Err(Error::Format(format!("unexpected header key '{other}'"))),
        }
        if !cur.eat(b',') {
            cur.expect(b'}')?;
            break;
        }
    }
    if cur.peek().is_some() {
        return Err(Error::Format("trailing bytes after header dict".into()));
    }

    let descr = descr.ok_or_else(|| Error::Format("header lacks 'descr'".into()))?;
    let (endian, dtype) = match descr.as_bytes() {
        [e @ (b'<' | b'>' | b'|' | b'='), b'f', n] => {
            let endian = if *e == b'>' { Endian::Big } else { Endian::Little };
            let dtype = match n {
                b'4' => Dtype::F4,
                b'8' => Dtype::F8,
                _ => return Err(Error::Format(format!("unsupported dtype '{descr}'"))),
            };
            (endian, dtype)
        }
        _ => return Err(Error::Format(format!("unsupported dtype '{descr}'"))),
    };
    Ok(Header {
        dtype,
        endian,
        fortran_order: fortran.ok_or_else(|| Error::Format("header lacks 'fortran_order'".into()))?,
        shape: shape.ok_or_else(|| Error::Format("header lacks 'shape'".into()))?,
    })
}
