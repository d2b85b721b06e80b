//! Serde adapter: arm indices are 1-based in config files, 0-based in code.

use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(arm: &usize, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(*arm as u64 + 1)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
    let v = u64::deserialize(d)?;
    if v == 0 {
        return Err(de::Error::custom("arm indices start at 1"));
    }
    Ok((v - 1) as usize)
}
