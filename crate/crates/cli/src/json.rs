//! Report serialization: floats with 17 significant digits, non-finite
//! floats as the strings `"+inf"`, `"-inf"`, `"nan"`.

use std::fmt::{self, Write};

use serde::ser::{self, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i128),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(String, Json)>),
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Json {
    value.serialize(TreeSerializer).expect("report types serialize infallibly")
}

/// Shortest exact decimal is not enough for the report contract, which fixes
/// 17 significant digits; trailing zeros are dropped since they carry nothing.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "\"nan\"".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "\"+inf\"".into() } else { "\"-inf\"".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s + ".0";
    }
    let t = s.trim_end_matches('0');
    if t.ends_with('.') {
        format!("{t}0")
    } else {
        t.to_string()
    }
}

fn write_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

impl Json {
    /// Indented when `indent` is set, otherwise on a single line.
    pub fn render(&self, indent: Option<usize>) -> String {
        let mut out = String::new();
        self.write(&mut out, indent, 0);
        out
    }

    fn write(&self, out: &mut String, indent: Option<usize>, depth: usize) {
        let newline = |out: &mut String, d: usize| {
            if let Some(w) = indent {
                out.push('\n');
                out.extend(std::iter::repeat(' ').take(w * d));
            }
        };
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Float(x) => out.push_str(&format_float(*x)),
            Json::Str(s) => write_str(out, s),
            Json::Array(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    newline(out, depth + 1);
                    item.write(out, indent, depth + 1);
                }
                newline(out, depth);
                out.push(']');
            }
            Json::Object(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    newline(out, depth + 1);
                    write_str(out, k);
                    out.push_str(if indent.is_some() { ": " } else { ":" });
                    v.write(out, indent, depth + 1);
                }
                newline(out, depth);
                out.push('}');
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&Json> {
        match self {
            Json::Object(fields) => fields.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct SerError(String);

impl fmt::Display for SerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SerError {}

impl ser::Error for SerError {
    fn custom<T: fmt::Display>(msg: T) -> Self {
        SerError(msg.to_string())
    }
}

struct TreeSerializer;

type R = Result<Json, SerError>;

pub struct SeqBuilder(Vec<Json>);

pub struct VariantSeqBuilder(&'static str, Vec<Json>);

pub struct MapBuilder {
    fields: Vec<(String, Json)>,
    key: Option<String>,
}

pub struct VariantMapBuilder(&'static str, Vec<(String, Json)>);

fn key_string(k: Json) -> Result<String, SerError> {
    match k {
        Json::Str(s) => Ok(s),
        Json::Int(i) => Ok(i.to_string()),
        Json::Bool(b) => Ok(b.to_string()),
        other => Err(SerError(format!("unsupported map key {other:?}"))),
    }
}

impl ser::Serializer for TreeSerializer {
    type Ok = Json;
    type Error = SerError;
    type SerializeSeq = SeqBuilder;
    type SerializeTuple = SeqBuilder;
    type SerializeTupleStruct = SeqBuilder;
    type SerializeTupleVariant = VariantSeqBuilder;
    type SerializeMap = MapBuilder;
    type SerializeStruct = MapBuilder;
    type SerializeStructVariant = VariantMapBuilder;

    fn serialize_bool(self, v: bool) -> R {
        Ok(Json::Bool(v))
    }
    fn serialize_i8(self, v: i8) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_i16(self, v: i16) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_i32(self, v: i32) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_i64(self, v: i64) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_u8(self, v: u8) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_u16(self, v: u16) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_u32(self, v: u32) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_u64(self, v: u64) -> R {
        Ok(Json::Int(v.into()))
    }
    fn serialize_u128(self, v: u128) -> R {
        i128::try_from(v)
            .map(Json::Int)
            .map_err(|_| SerError("integer out of range".into()))
    }
    fn serialize_f32(self, v: f32) -> R {
        Ok(Json::Float(v.into()))
    }
    fn serialize_f64(self, v: f64) -> R {
        Ok(Json::Float(v))
    }
    fn serialize_char(self, v: char) -> R {
        Ok(Json::Str(v.to_string()))
    }
    fn serialize_str(self, v: &str) -> R {
        Ok(Json::Str(v.to_string()))
    }
    fn serialize_bytes(self, v: &[u8]) -> R {
        Ok(Json::Array(v.iter().map(|&b| Json::Int(b.into())).collect()))
    }
    fn serialize_none(self) -> R {
        Ok(Json::Null)
    }
    fn serialize_some<T: ?Sized + Serialize>(self, value: &T) -> R {
        value.serialize(self)
    }
    fn serialize_unit(self) -> R {
        Ok(Json::Null)
    }
    fn serialize_unit_struct(self, _: &'static str) -> R {
        Ok(Json::Null)
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, variant: &'static str) -> R {
        Ok(Json::Str(variant.to_string()))
    }
    fn serialize_newtype_struct<T: ?Sized + Serialize>(self, _: &'static str, value: &T) -> R {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: ?Sized + Serialize>(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> R {
        Ok(Json::Object(vec![(variant.to_string(), value.serialize(self)?)]))
    }
    fn serialize_seq(self, len: Option<usize>) -> Result<SeqBuilder, SerError> {
        Ok(SeqBuilder(Vec::with_capacity(len.unwrap_or(0))))
    }
    fn serialize_tuple(self, len: usize) -> Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_struct(self, _: &'static str, len: usize) -> Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        _: usize,
    ) -> Result<VariantSeqBuilder, SerError> {
        Ok(VariantSeqBuilder(variant, Vec::new()))
    }
    fn serialize_map(self, _: Option<usize>) -> Result<MapBuilder, SerError> {
        Ok(MapBuilder {
            fields: Vec::new(),
            key: None,
        })
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> Result<MapBuilder, SerError> {
        self.serialize_map(None)
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        _: usize,
    ) -> Result<VariantMapBuilder, SerError> {
        Ok(VariantMapBuilder(variant, Vec::new()))
    }
}

impl ser::SerializeSeq for SeqBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_element<T: ?Sized + Serialize>(&mut self, value: &T) -> Result<(), SerError> {
        self.0.push(value.serialize(TreeSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        Ok(Json::Array(self.0))
    }
}

impl ser::SerializeTuple for SeqBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_element<T: ?Sized + Serialize>(&mut self, value: &T) -> Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, value)
    }
    fn end(self) -> R {
        ser::SerializeSeq::end(self)
    }
}

impl ser::SerializeTupleStruct for SeqBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, value: &T) -> Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, value)
    }
    fn end(self) -> R {
        ser::SerializeSeq::end(self)
    }
}

impl ser::SerializeTupleVariant for VariantSeqBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, value: &T) -> Result<(), SerError> {
        self.1.push(value.serialize(TreeSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        Ok(Json::Object(vec![(self.0.to_string(), Json::Array(self.1))]))
    }
}

impl ser::SerializeMap for MapBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_key<T: ?Sized + Serialize>(&mut self, key: &T) -> Result<(), SerError> {
        self.key = Some(key_string(key.serialize(TreeSerializer)?)?);
        Ok(())
    }
    fn serialize_value<T: ?Sized + Serialize>(&mut self, value: &T) -> Result<(), SerError> {
        let key = self.key.take().ok_or_else(|| SerError("value without key".into()))?;
        self.fields.push((key, value.serialize(TreeSerializer)?));
        Ok(())
    }
    fn end(self) -> R {
        Ok(Json::Object(self.fields))
    }
}

impl ser::SerializeStruct for MapBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, key: &'static str, value: &T) -> Result<(), SerError> {
        self.fields.push((key.to_string(), value.serialize(TreeSerializer)?));
        Ok(())
    }
    fn end(self) -> R {
        Ok(Json::Object(self.fields))
    }
}

impl ser::SerializeStructVariant for VariantMapBuilder {
    type Ok = Json;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, key: &'static str, value: &T) -> Result<(), SerError> {
        self.1.push((key.to_string(), value.serialize(TreeSerializer)?));
        Ok(())
    }
    fn end(self) -> R {
        Ok(Json::Object(vec![(self.0.to_string(), Json::Object(self.1))]))
    }
}
