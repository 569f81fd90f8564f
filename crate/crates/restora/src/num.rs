use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A float that survives JSON: finite values are plain numbers, the rest are
/// the strings `"inf"`, `"-inf"` and `"NaN"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Num, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Num(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" | "-inf" | "NaN" => Ok(Num(t.parse().expect("valid float literal"))),
                _ => Err(de::Error::custom(format!("expected a number, got \"{t}\""))),
            },
        }
    }
}

pub(crate) fn wrap(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

pub(crate) fn wrap2(v: &[Vec<f64>]) -> Vec<Vec<Num>> {
    v.iter().map(|r| wrap(r)).collect()
}

pub(crate) fn unwrap(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

pub(crate) fn unwrap2(v: &[Vec<Num>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| unwrap(r)).collect()
}
