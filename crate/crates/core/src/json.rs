//! JSON helpers shared by every file format in the crate.
//!
//! Floats are written with exactly 17 significant digits so that identical
//! computations produce byte-identical files. Exponents `p`, `q` may be
//! infinite; they travel as the string `"inf"`.

use std::io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::ser::{Formatter, PrettyFormatter};

/// Pretty formatter that prints every `f64` as `d.dddddddddddddddde±x`.
pub struct FixedDigitsFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FixedDigitsFormatter<'_> {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for FixedDigitsFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with fixed 17-significant-digit floats.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigitsFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    // The formatter only emits ASCII.
    Ok(String::from_utf8(buf).expect("json output is utf-8"))
}

/// `serde(with = ...)` adapter for reals that may be `+inf`.
pub mod extended {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        match Repr::deserialize(de)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => parse(&s).map_err(serde::de::Error::custom),
        }
    }

    /// Parses a real that may be spelled `inf`/`infinity`.
    pub fn parse(text: &str) -> Result<f64, String> {
        match text.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|e| format!("cannot parse {text:?} as a real: {e}")),
        }
    }
}

/// Same as [`extended`] for `Vec<f64>`.
pub mod extended_vec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Item(#[serde(with = "super::extended")] f64);

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let items: Vec<Item> = values.iter().map(|&v| Item(v)).collect();
        items.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let items = Vec::<Item>::deserialize(de)?;
        Ok(items.into_iter().map(|i| i.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Probe {
        #[serde(with = "extended")]
        q: f64,
        x: f64,
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let text = to_string(&Probe { q: 2.0, x: 0.1 }).unwrap();
        assert!(text.contains("2.0000000000000000e0"), "{text}");
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    #[test]
    fn infinity_round_trips_as_text() {
        let probe = Probe {
            q: f64::INFINITY,
            x: -3.5,
        };
        let text = to_string(&probe).unwrap();
        assert!(text.contains("\"inf\""));
        let back: Probe = serde_json::from_str(&text).unwrap();
        assert_eq!(back, probe);
    }

    #[test]
    fn fixed_digits_round_trip_exactly() {
        for v in [1.0 / 3.0, 2.0f64.powi(-40), 123456.789, -7.0e-300] {
            let text = to_string(&v).unwrap();
            let back: f64 = serde_json::from_str(&text).unwrap();
            assert_eq!(back, v);
        }
    }
}
