//! Serde helpers for floats that may be infinite. Infinite values are
//! written as the strings `"inf"` / `"-inf"`; finite values as numbers.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interval::Endpoint;

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    Endpoint(*v).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Endpoint::deserialize(d).map(|e| e.0)
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Endpoint).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Endpoint>::deserialize(d)?.map(|e| e.0))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| Endpoint(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Endpoint>::deserialize(d)?
            .into_iter()
            .map(|e| e.0)
            .collect())
    }
}
