//! Canonical report serialization.
//!
//! Reports are JSON envelopes around a typed payload. Serialization is
//! canonical: map keys are sorted (serde_json's default BTreeMap), struct
//! fields keep declaration order, and every float is written with 17
//! significant digits so a reread reproduces the exact bits. Non-finite
//! floats are rejected at write time — upstream invariants forbid them,
//! so one reaching the serializer is a bug worth failing loudly on.
//!
//! Timestamps come from the `CVSELECT_TIMESTAMP` environment variable
//! when set (the reproducible-builds convention), else the wall clock;
//! they are the one field excluded from byte-level comparisons.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CvError, Result};
use crate::losses::PointwiseLosses;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub schema_version: u32,
    pub toolkit_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    /// The fully resolved run configuration that produced the payload.
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_fingerprint: Option<String>,
    pub payload_type: String,
    pub payload: Value,
    /// Unknown keys from newer writers are preserved on round-trip.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl ReportEnvelope {
    pub fn new(payload_type: &str, payload: &impl Serialize, config: Value) -> Result<Self> {
        Ok(ReportEnvelope {
            schema_version: SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            created_at: timestamp(),
            config,
            plan_fingerprint: None,
            payload_type: payload_type.to_string(),
            payload: serde_json::to_value(payload)?,
            extra: serde_json::Map::new(),
        })
    }

    pub fn with_fingerprint(mut self, fp: impl Into<String>) -> Self {
        self.plan_fingerprint = Some(fp.into());
        self
    }
}

/// ISO-8601 UTC timestamp; `CVSELECT_TIMESTAMP` overrides for
/// reproducible runs, and setting it to the empty string omits the field.
pub fn timestamp() -> Option<String> {
    if let Ok(v) = std::env::var("CVSELECT_TIMESTAMP") {
        if v.is_empty() {
            return None;
        }
        return Some(v);
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format_utc(secs))
}

/// Civil-from-days conversion (proleptic Gregorian).
fn format_utc(unix_secs: u64) -> String {
    let days = (unix_secs / 86_400) as i64;
    let rem = unix_secs % 86_400;
    let (h, m, s) = (rem / 3600, (rem % 3600) / 60, rem % 60);
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}T{h:02}:{m:02}:{s:02}Z")
}

struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if !value.is_finite() {
            return Err(std::io::Error::other(format!(
                "non-finite float {value} in report payload"
            )));
        }
        // 17 significant digits: exact f64 round-trip in plain JSON.
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with sorted map keys and 17-significant-digit floats.
/// serde_json degrades non-finite floats to null, so a validating pass
/// rejects them first.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    finite_check::check(value)
        .map_err(|_| CvError::invalid("non-finite float in report payload"))?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| CvError::invalid(format!("non-utf8 json: {e}")))
}

/// A serializer that does nothing but fail on NaN or infinity.
mod finite_check {
    use serde::ser::{self, Serialize};
    use std::fmt;

    #[derive(Debug)]
    pub struct NonFinite;

    impl fmt::Display for NonFinite {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("non-finite float")
        }
    }

    impl std::error::Error for NonFinite {}

    impl ser::Error for NonFinite {
        fn custom<T: fmt::Display>(_msg: T) -> Self {
            NonFinite
        }
    }

    pub fn check<T: Serialize + ?Sized>(value: &T) -> std::result::Result<(), NonFinite> {
        value.serialize(Checker)
    }

    struct Checker;
    struct Compound;

    macro_rules! ok_scalar {
        ($($method:ident: $ty:ty),*) => {
            $(fn $method(self, _v: $ty) -> std::result::Result<(), NonFinite> { Ok(()) })*
        };
    }

    impl ser::Serializer for Checker {
        type Ok = ();
        type Error = NonFinite;
        type SerializeSeq = Compound;
        type SerializeTuple = Compound;
        type SerializeTupleStruct = Compound;
        type SerializeTupleVariant = Compound;
        type SerializeMap = Compound;
        type SerializeStruct = Compound;
        type SerializeStructVariant = Compound;

        ok_scalar!(
            serialize_bool: bool, serialize_i8: i8, serialize_i16: i16,
            serialize_i32: i32, serialize_i64: i64, serialize_u8: u8,
            serialize_u16: u16, serialize_u32: u32, serialize_u64: u64,
            serialize_char: char, serialize_str: &str
        );

        fn serialize_f32(self, v: f32) -> std::result::Result<(), NonFinite> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NonFinite)
            }
        }

        fn serialize_f64(self, v: f64) -> std::result::Result<(), NonFinite> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NonFinite)
            }
        }

        fn serialize_bytes(self, _v: &[u8]) -> std::result::Result<(), NonFinite> {
            Ok(())
        }

        fn serialize_none(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }

        fn serialize_some<T: Serialize + ?Sized>(
            self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn serialize_unit(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }

        fn serialize_unit_struct(self, _: &'static str) -> std::result::Result<(), NonFinite> {
            Ok(())
        }

        fn serialize_unit_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
        ) -> std::result::Result<(), NonFinite> {
            Ok(())
        }

        fn serialize_newtype_struct<T: Serialize + ?Sized>(
            self,
            _: &'static str,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn serialize_newtype_variant<T: Serialize + ?Sized>(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn serialize_seq(
            self,
            _: Option<usize>,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_tuple(self, _: usize) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_tuple_struct(
            self,
            _: &'static str,
            _: usize,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_tuple_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_map(
            self,
            _: Option<usize>,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_struct(
            self,
            _: &'static str,
            _: usize,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }

        fn serialize_struct_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> std::result::Result<Compound, NonFinite> {
            Ok(Compound)
        }
    }

    impl ser::SerializeSeq for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_element<T: Serialize + ?Sized>(
            &mut self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeTuple for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_element<T: Serialize + ?Sized>(
            &mut self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeTupleStruct for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: Serialize + ?Sized>(
            &mut self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeTupleVariant for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: Serialize + ?Sized>(
            &mut self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeMap for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_key<T: Serialize + ?Sized>(
            &mut self,
            key: &T,
        ) -> std::result::Result<(), NonFinite> {
            key.serialize(Checker)
        }

        fn serialize_value<T: Serialize + ?Sized>(
            &mut self,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeStruct for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: Serialize + ?Sized>(
            &mut self,
            _: &'static str,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }

    impl ser::SerializeStructVariant for Compound {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: Serialize + ?Sized>(
            &mut self,
            _: &'static str,
            value: &T,
        ) -> std::result::Result<(), NonFinite> {
            value.serialize(Checker)
        }

        fn end(self) -> std::result::Result<(), NonFinite> {
            Ok(())
        }
    }
}

pub fn write_report(envelope: &ReportEnvelope, path: impl AsRef<Path>) -> Result<()> {
    let text = to_canonical_json(envelope)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportEnvelope> {
    let text = std::fs::read_to_string(&path)?;
    let envelope: ReportEnvelope = serde_json::from_str(&text).map_err(|e| {
        CvError::invalid(format!(
            "cannot parse {} at line {}, column {}: {e}",
            path.as_ref().display(),
            e.line(),
            e.column()
        ))
    })?;
    if envelope.schema_version != SCHEMA_VERSION {
        return Err(CvError::SchemaVersion {
            expected: SCHEMA_VERSION,
            found: envelope.schema_version,
        });
    }
    Ok(envelope)
}

/// Pointwise-loss sidecar: `index,loss` rows.
pub fn pointwise_csv(losses: &PointwiseLosses) -> String {
    let mut out = String::from("index,loss\n");
    for (i, v) in losses.index.iter().zip(losses.values.iter()) {
        out.push_str(&format!("{i},{v:.16e}\n"));
    }
    out
}

pub fn write_pointwise_csv(losses: &PointwiseLosses, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, pointwise_csv(losses))?;
    Ok(())
}
