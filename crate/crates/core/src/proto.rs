//! Strict proto3 wire format.
//!
//! Encoders always emit fields in ascending field-number order and omit
//! default-valued non-optional scalars. The decoder enforces exactly that
//! form, so every accepted message re-encodes to the same bytes.

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProtoError {
    #[error("truncated input")]
    Truncated,
    #[error("non-minimal varint")]
    NonMinimalVarint,
    #[error("varint overflow")]
    VarintOverflow,
    #[error("unsupported wire type {0}")]
    WireType(u8),
    #[error("field {0} out of order")]
    Order(u32),
    #[error("field {0} repeated")]
    Duplicate(u32),
    #[error("unknown field {0}")]
    Unknown(u32),
    #[error("field {0} has wrong wire type")]
    WrongType(u32),
    #[error("field {0} encodes a default value")]
    DefaultValue(u32),
    #[error("field {0} is missing")]
    Missing(u32),
    #[error("field {0}: {1}")]
    Invalid(u32, &'static str),
}

pub type Result<T> = std::result::Result<T, ProtoError>;

const VARINT: u8 = 0;
const LEN: u8 = 2;

//------------ Writer --------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

pub fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

pub fn varint_len(v: u64) -> usize {
    ((64 - (v | 1).leading_zeros() as usize) + 6) / 7
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(&mut self, field: u32, wire: u8) {
        put_varint(&mut self.buf, ((field as u64) << 3) | wire as u64);
    }

    /// Writes a non-optional varint, omitting it when zero.
    pub fn uint(&mut self, field: u32, v: u64) -> &mut Self {
        if v != 0 {
            self.opt_uint(field, Some(v));
        }
        self
    }

    pub fn int64(&mut self, field: u32, v: i64) -> &mut Self {
        self.uint(field, v as u64)
    }

    /// Writes an explicit-presence varint.
    pub fn opt_uint(&mut self, field: u32, v: Option<u64>) -> &mut Self {
        if let Some(v) = v {
            self.key(field, VARINT);
            put_varint(&mut self.buf, v);
        }
        self
    }

    /// Writes a non-optional bytes or string field, omitting it when empty.
    pub fn bytes(&mut self, field: u32, v: &[u8]) -> &mut Self {
        if !v.is_empty() {
            self.len_field(field, v);
        }
        self
    }

    pub fn string(&mut self, field: u32, v: &str) -> &mut Self {
        self.bytes(field, v.as_bytes())
    }

    pub fn opt_bytes(&mut self, field: u32, v: Option<&[u8]>) -> &mut Self {
        if let Some(v) = v {
            self.len_field(field, v);
        }
        self
    }

    /// Writes an embedded message. Messages have presence, so an empty
    /// message is still written.
    pub fn message(&mut self, field: u32, v: &[u8]) -> &mut Self {
        self.len_field(field, v)
    }

    fn len_field(&mut self, field: u32, v: &[u8]) -> &mut Self {
        self.key(field, LEN);
        put_varint(&mut self.buf, v.len() as u64);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

//------------ Reader --------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value<'a> {
    Varint(u64),
    Len(&'a [u8]),
}

pub fn get_varint(buf: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for i in 0..10 {
        let b = *buf.get(*pos).ok_or(ProtoError::Truncated)?;
        *pos += 1;
        if i == 9 && b > 1 {
            return Err(ProtoError::VarintOverflow);
        }
        v |= ((b & 0x7f) as u64) << (7 * i);
        if b & 0x80 == 0 {
            if b == 0 && i > 0 {
                return Err(ProtoError::NonMinimalVarint);
            }
            return Ok(v);
        }
    }
    Err(ProtoError::VarintOverflow)
}

/// The fields of one message, in wire order, checked for ordering.
#[derive(Debug)]
pub struct Fields<'a> {
    fields: Vec<(u32, Value<'a>)>,
    pos: usize,
}

impl<'a> Fields<'a> {
    pub fn parse(buf: &'a [u8]) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        let mut last = 0u32;
        while pos < buf.len() {
            let key = get_varint(buf, &mut pos)?;
            let field = u32::try_from(key >> 3).map_err(|_| ProtoError::Unknown(u32::MAX))?;
            if field == 0 {
                return Err(ProtoError::Unknown(0));
            }
            if field < last {
                return Err(ProtoError::Order(field));
            }
            last = field;
            let value = match (key & 7) as u8 {
                VARINT => Value::Varint(get_varint(buf, &mut pos)?),
                LEN => {
                    let len = get_varint(buf, &mut pos)?;
                    let len = usize::try_from(len).map_err(|_| ProtoError::Truncated)?;
                    let end = pos.checked_add(len).ok_or(ProtoError::Truncated)?;
                    let data = buf.get(pos..end).ok_or(ProtoError::Truncated)?;
                    pos = end;
                    Value::Len(data)
                }
                other => return Err(ProtoError::WireType(other)),
            };
            fields.push((field, value));
        }
        Ok(Fields { fields, pos: 0 })
    }

    fn take_all(&mut self, field: u32) -> &[(u32, Value<'a>)] {
        let start = self.pos;
        while self.pos < self.fields.len() && self.fields[self.pos].0 == field {
            self.pos += 1;
        }
        &self.fields[start..self.pos]
    }

    fn take_one(&mut self, field: u32) -> Result<Option<Value<'a>>> {
        match self.take_all(field) {
            [] => Ok(None),
            [(_, v)] => Ok(Some(*v)),
            _ => Err(ProtoError::Duplicate(field)),
        }
    }

    pub fn opt_uint(&mut self, field: u32) -> Result<Option<u64>> {
        match self.take_one(field)? {
            None => Ok(None),
            Some(Value::Varint(v)) => Ok(Some(v)),
            Some(_) => Err(ProtoError::WrongType(field)),
        }
    }

    pub fn uint(&mut self, field: u32) -> Result<u64> {
        match self.opt_uint(field)? {
            Some(0) => Err(ProtoError::DefaultValue(field)),
            v => Ok(v.unwrap_or(0)),
        }
    }

    pub fn uint32(&mut self, field: u32) -> Result<u32> {
        u32::try_from(self.uint(field)?).map_err(|_| ProtoError::Invalid(field, "uint32 overflow"))
    }

    pub fn int64(&mut self, field: u32) -> Result<i64> {
        Ok(self.uint(field)? as i64)
    }

    pub fn opt_bytes(&mut self, field: u32) -> Result<Option<&'a [u8]>> {
        match self.take_one(field)? {
            None => Ok(None),
            Some(Value::Len(v)) => Ok(Some(v)),
            Some(_) => Err(ProtoError::WrongType(field)),
        }
    }

    pub fn bytes(&mut self, field: u32) -> Result<&'a [u8]> {
        match self.opt_bytes(field)? {
            Some([]) => Err(ProtoError::DefaultValue(field)),
            v => Ok(v.unwrap_or(&[])),
        }
    }

    pub fn string(&mut self, field: u32) -> Result<&'a str> {
        std::str::from_utf8(self.bytes(field)?).map_err(|_| ProtoError::Invalid(field, "utf-8"))
    }

    pub fn message(&mut self, field: u32) -> Result<Option<&'a [u8]>> {
        self.opt_bytes(field)
    }

    pub fn required_message(&mut self, field: u32) -> Result<&'a [u8]> {
        self.message(field)?.ok_or(ProtoError::Missing(field))
    }

    pub fn repeated(&mut self, field: u32) -> Result<Vec<&'a [u8]>> {
        self.take_all(field)
            .iter()
            .map(|(_, v)| match v {
                Value::Len(b) => Ok(*b),
                Value::Varint(_) => Err(ProtoError::WrongType(field)),
            })
            .collect()
    }

    /// Fails if any field has not been consumed.
    pub fn finish(&self) -> Result<()> {
        match self.fields.get(self.pos) {
            None => Ok(()),
            Some((field, _)) => Err(ProtoError::Unknown(*field)),
        }
    }
}

//------------ Timestamp -----------------------------------------------------

/// `google.protobuf.Timestamp` restricted to whole seconds.
pub fn timestamp(seconds: i64) -> Vec<u8> {
    Writer::new().int64(1, seconds).finish()
}

pub fn parse_timestamp(buf: &[u8]) -> Result<i64> {
    let mut f = Fields::parse(buf)?;
    let seconds = f.int64(1)?;
    if f.uint(2)? != 0 {
        return Err(ProtoError::Invalid(2, "sub-second timestamps unsupported"));
    }
    f.finish()?;
    Ok(seconds)
}
