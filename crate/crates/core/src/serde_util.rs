//! Serde representation for integer-keyed layer maps.
//!
//! JSON objects only carry string keys, and serde_json's string-to-integer
//! key conversion is lost when content is buffered (internally tagged
//! enums). Layer maps therefore serialize as ordered `[index, value]`
//! pairs, which is also self-describing in the artifacts.

use serde::de::{Deserialize, Deserializer};
use serde::ser::{Serialize, Serializer};
use std::collections::BTreeMap;

pub(crate) fn serialize<V, S>(map: &BTreeMap<i32, V>, ser: S) -> Result<S::Ok, S::Error>
where
    V: Serialize,
    S: Serializer,
{
    ser.collect_seq(map.iter())
}

pub(crate) fn deserialize<'de, V, D>(de: D) -> Result<BTreeMap<i32, V>, D::Error>
where
    V: Deserialize<'de>,
    D: Deserializer<'de>,
{
    Ok(Vec::<(i32, V)>::deserialize(de)?.into_iter().collect())
}
