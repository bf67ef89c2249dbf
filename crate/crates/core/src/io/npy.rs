//! Reader and writer for the NPY v1.0 array container.
//!
//! Layout: the magic string `\x93NUMPY`, version bytes `(1, 0)`, a little-endian
//! `u16` header length, an ASCII Python dict literal with the keys `descr`,
//! `fortran_order` and `shape` (space padded and newline terminated so the whole
//! preamble is a multiple of 64 bytes), then the raw little-endian payload.
//!
//! Only C-ordered little-endian floats (`f4`, `f8`) and 1/2/4/8-byte integers are
//! supported. Every decode error carries the byte offset where it was detected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// The npy magic string.
pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

const PREAMBLE_LEN: usize = MAGIC.len() + 2 + 2;
const ALIGN: usize = 64;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed magic string at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported npy version {major}.{minor} at byte {offset}")]
    UnsupportedVersion { major: u8, minor: u8, offset: usize },
    #[error("malformed header at byte {offset}: {reason}")]
    Header { offset: usize, reason: String },
    #[error("unsupported dtype '{descr}' at byte {offset}")]
    UnsupportedDtype { descr: String, offset: usize },
    #[error("unsupported order (fortran_order = True) at byte {offset}")]
    UnsupportedOrder { offset: usize },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("shape {shape:?} does not match {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// Typed payload of an npy file.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
    U64(Vec<u64>),
}

/// Element types that can be stored in an npy payload.
pub trait NpyElement: Copy + Sized {
    /// Type descriptor written into the header, e.g. `<f8`.
    const DESCR: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn into_data(values: Vec<Self>) -> NpyData;
    fn is_finite_value(self) -> bool {
        true
    }
}

macro_rules! npy_element {
    ($t:ty, $descr:expr, $variant:ident) => {
        npy_element!($t, $descr, $variant, |_v: $t| true);
    };
    ($t:ty, $descr:expr, $variant:ident, $finite:expr) => {
        impl NpyElement for $t {
            const DESCR: &'static str = $descr;
            const SIZE: usize = std::mem::size_of::<$t>();
            #[inline]
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
            fn into_data(values: Vec<Self>) -> NpyData {
                NpyData::$variant(values)
            }
            fn is_finite_value(self) -> bool {
                ($finite)(self)
            }
        }
    };
}

npy_element!(f32, "<f4", F32, |v: f32| v.is_finite());
npy_element!(f64, "<f8", F64, |v: f64| v.is_finite());
npy_element!(i8, "|i1", I8);
npy_element!(i16, "<i2", I16);
npy_element!(i32, "<i4", I32);
npy_element!(i64, "<i8", I64);
npy_element!(u8, "|u1", U8);
npy_element!(u16, "<u2", U16);
npy_element!(u32, "<u4", U32);
npy_element!(u64, "<u8", U64);

macro_rules! each_variant {
    ($data:expr, $v:ident => $body:expr) => {
        match $data {
            NpyData::F32($v) => $body,
            NpyData::F64($v) => $body,
            NpyData::I8($v) => $body,
            NpyData::I16($v) => $body,
            NpyData::I32($v) => $body,
            NpyData::I64($v) => $body,
            NpyData::U8($v) => $body,
            NpyData::U16($v) => $body,
            NpyData::U32($v) => $body,
            NpyData::U64($v) => $body,
        }
    };
}

impl NpyData {
    pub fn len(&self) -> usize {
        each_variant!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn descr(&self) -> &'static str {
        fn d<T: NpyElement>(_: &[T]) -> &'static str {
            T::DESCR
        }
        each_variant!(self, v => d(v))
    }

    pub fn is_float(&self) -> bool {
        matches!(self, NpyData::F32(_) | NpyData::F64(_))
    }

    /// Values widened to `f64`. Exact for floats and for integers below 2^53.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NpyData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::I8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::I16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::U16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::U32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::U64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Integer payloads as `i64`; `None` for float payloads or unsigned values above `i64::MAX`.
    pub fn to_i64(&self) -> Option<Vec<i64>> {
        Some(match self {
            NpyData::F32(_) | NpyData::F64(_) => return None,
            NpyData::I8(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::I16(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::I32(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::I64(v) => v.clone(),
            NpyData::U8(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::U16(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::U32(v) => v.iter().map(|&x| i64::from(x)).collect(),
            NpyData::U64(v) => {
                let mut out = Vec::with_capacity(v.len());
                for &x in v {
                    out.push(i64::try_from(x).ok()?);
                }
                out
            }
        })
    }

    fn first_non_finite(&self) -> Option<usize> {
        each_variant!(self, v => v.iter().position(|x| !x.is_finite_value()))
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        each_variant!(self, v => {
            for &x in v.iter() {
                x.write_le(out);
            }
        })
    }
}

/// A dense C-ordered array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self, NpyError> {
        let len = shape.iter().product::<usize>();
        if len != data.len() {
            return Err(NpyError::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_vec<T: NpyElement>(shape: Vec<usize>, values: Vec<T>) -> Result<Self, NpyError> {
        Self::new(shape, T::into_data(values))
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }
}

/// Loads an npy file from disk.
pub fn load_npy(path: impl AsRef<Path>) -> Result<NpyArray, NpyError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_npy(&mut reader)
}

/// Writes an array to disk; the payload must be finite.
pub fn save_npy(array: &NpyArray, path: impl AsRef<Path>) -> Result<(), NpyError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_npy(array, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Convenience wrapper around [`save_npy`] for a typed slice.
pub fn save_slice<T: NpyElement>(
    shape: &[usize],
    values: &[T],
    path: impl AsRef<Path>,
) -> Result<(), NpyError> {
    let array = NpyArray::from_vec(shape.to_vec(), values.to_vec())?;
    save_npy(&array, path)
}

pub fn read_npy<R: Read>(reader: &mut R) -> Result<NpyArray, NpyError> {
    let mut preamble = [0u8; PREAMBLE_LEN];
    read_exact_at(reader, &mut preamble, 0)?;
    if preamble[..MAGIC.len()] != MAGIC {
        let offset = preamble
            .iter()
            .zip(MAGIC.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(NpyError::BadMagic { offset });
    }
    let (major, minor) = (preamble[6], preamble[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion {
            major,
            minor,
            offset: 6,
        });
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut header = vec![0u8; header_len];
    read_exact_at(reader, &mut header, PREAMBLE_LEN)?;
    let header = parse_header(&header, PREAMBLE_LEN)?;

    let payload_offset = PREAMBLE_LEN + header_len;
    if header.fortran_order {
        return Err(NpyError::UnsupportedOrder {
            offset: header.fortran_offset,
        });
    }
    let count: usize = header.shape.iter().product();
    let data = match header.descr.as_str() {
        "<f4" => read_payload::<f32, R>(reader, count, payload_offset)?,
        "<f8" => read_payload::<f64, R>(reader, count, payload_offset)?,
        "|i1" | "<i1" => read_payload::<i8, R>(reader, count, payload_offset)?,
        "<i2" => read_payload::<i16, R>(reader, count, payload_offset)?,
        "<i4" => read_payload::<i32, R>(reader, count, payload_offset)?,
        "<i8" => read_payload::<i64, R>(reader, count, payload_offset)?,
        "|u1" | "<u1" => read_payload::<u8, R>(reader, count, payload_offset)?,
        "<u2" => read_payload::<u16, R>(reader, count, payload_offset)?,
        "<u4" => read_payload::<u32, R>(reader, count, payload_offset)?,
        "<u8" => read_payload::<u64, R>(reader, count, payload_offset)?,
        other => {
            return Err(NpyError::UnsupportedDtype {
                descr: other.to_string(),
                offset: header.descr_offset,
            })
        }
    };
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

pub fn write_npy<W: Write>(array: &NpyArray, writer: &mut W) -> Result<(), NpyError> {
    if let Some(index) = array.data.first_non_finite() {
        return Err(NpyError::NonFinite { index });
    }
    let expected: usize = array.shape.iter().product();
    if expected != array.data.len() {
        return Err(NpyError::ShapeMismatch {
            shape: array.shape.clone(),
            len: array.data.len(),
        });
    }
    let shape = match array.shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", array.shape[0]),
        _ => format!(
            "({})",
            array
                .shape
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        array.data.descr(),
        shape
    );
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');

    let header_len = u16::try_from(dict.len()).map_err(|_| NpyError::Header {
        offset: 8,
        reason: "header longer than 65535 bytes".into(),
    })?;
    let mut out = Vec::with_capacity(PREAMBLE_LEN + dict.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    writer.write_all(&out)?;

    let mut payload = Vec::new();
    array.data.write_payload(&mut payload);
    writer.write_all(&payload)?;
    Ok(())
}

fn read_exact_at<R: Read>(reader: &mut R, buf: &mut [u8], offset: usize) -> Result<(), NpyError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(NpyError::Truncated {
                    offset: offset + filled,
                    expected: buf.len(),
                    found: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn read_payload<T: NpyElement, R: Read>(
    reader: &mut R,
    count: usize,
    offset: usize,
) -> Result<NpyData, NpyError> {
    let mut bytes = vec![0u8; count * T::SIZE];
    read_exact_at(reader, &mut bytes, offset).map_err(|e| match e {
        NpyError::Truncated { offset, found, .. } => NpyError::Truncated {
            offset,
            expected: count * T::SIZE,
            found,
        },
        other => other,
    })?;
    let values = bytes.chunks_exact(T::SIZE).map(T::read_le).collect();
    Ok(T::into_data(values))
}

struct Header {
    descr: String,
    descr_offset: usize,
    fortran_order: bool,
    fortran_offset: usize,
    shape: Vec<usize>,
}

/// Minimal parser for the Python dict literal stored in the header.
struct DictParser<'a> {
    text: &'a [u8],
    pos: usize,
    base: usize,
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> DictParser<'a> {
    fn err(&self, reason: impl Into<String>) -> NpyError {
        NpyError::Header {
            offset: self.base + self.pos,
            reason: reason.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.text.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn integer(&mut self) -> Result<usize, NpyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        // numpy on some platforms writes `3L`
        let digits = std::str::from_utf8(&self.text[start..self.pos]).unwrap_or_default();
        if self.text.get(self.pos) == Some(&b'L') {
            self.pos += 1;
        }
        digits
            .parse()
            .map_err(|_| self.err("expected non-negative integer"))
    }

    fn value(&mut self) -> Result<Value, NpyError> {
        match self.peek() {
            Some(b'\'' | b'"') => Ok(Value::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b',') if !dims.is_empty() => self.pos += 1,
                        Some(_) => dims.push(self.integer()?),
                        None => return Err(self.err("unterminated tuple")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            Some(b'T') if self.text[self.pos..].starts_with(b"True") => {
                self.pos += 4;
                Ok(Value::Bool(true))
            }
            Some(b'F') if self.text[self.pos..].starts_with(b"False") => {
                self.pos += 5;
                Ok(Value::Bool(false))
            }
            _ => Err(self.err("unrecognised value")),
        }
    }
}

fn parse_header(bytes: &[u8], base: usize) -> Result<Header, NpyError> {
    let mut p = DictParser {
        text: bytes,
        pos: 0,
        base,
    };
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    p.expect(b'{')?;
    loop {
        match p.peek() {
            Some(b'}') => break,
            Some(b',') => {
                p.pos += 1;
                continue;
            }
            None => return Err(p.err("unterminated dict")),
            _ => {}
        }
        let key = p.string()?;
        p.expect(b':')?;
        let at = base + {
            p.skip_ws();
            p.pos
        };
        let value = p.value()?;
        match (key.as_str(), value) {
            ("descr", Value::Str(s)) => descr = Some((s, at)),
            ("fortran_order", Value::Bool(b)) => fortran = Some((b, at)),
            ("shape", Value::Tuple(t)) => shape = Some(t),
            (k, _) => {
                return Err(NpyError::Header {
                    offset: at,
                    reason: format!("unexpected key or value type for '{k}'"),
                })
            }
        }
    }
    let missing = |k: &str| NpyError::Header {
        offset: base,
        reason: format!("missing key '{k}'"),
    };
    let (descr, descr_offset) = descr.ok_or_else(|| missing("descr"))?;
    let (fortran_order, fortran_offset) = fortran.ok_or_else(|| missing("fortran_order"))?;
    let shape = shape.ok_or_else(|| missing("shape"))?;
    Ok(Header {
        descr,
        descr_offset,
        fortran_order,
        fortran_offset,
        shape,
    })
}
