//! Binary architectural trait maps describing each agent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// One architectural trait. Declaration order is the canonical order used
/// for bit strings and node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trait {
    Conv,
    Pool,
    Att,
    Bn,
    Dr,
    Skip,
    Wide,
    Deep,
}

impl Trait {
    pub const ALL: [Trait; 8] = [
        Trait::Conv,
        Trait::Pool,
        Trait::Att,
        Trait::Bn,
        Trait::Dr,
        Trait::Skip,
        Trait::Wide,
        Trait::Deep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Conv => "conv",
            Trait::Pool => "pool",
            Trait::Att => "att",
            Trait::Bn => "bn",
            Trait::Dr => "dr",
            Trait::Skip => "skip",
            Trait::Wide => "wide",
            Trait::Deep => "deep",
        }
    }
}

impl FromStr for Trait {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Trait::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SpecError::UnknownTrait(s.to_string()))
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("unknown trait {0:?}")]
    UnknownTrait(String),
    #[error("trait {0} is missing")]
    MissingTrait(Trait),
    #[error("trait {name} has non-binary value {value}")]
    NonBinary { name: String, value: i64 },
    #[error("bit string must be 8 characters of 0/1, got {0:?}")]
    BadBits(String),
    #[error("trait sets differ: {left} vs {right}")]
    TraitSetMismatch { left: String, right: String },
}

/// Ordered map from trait to flag.
///
/// [`AgentSpec::new`] and the parsers build full specs carrying all eight
/// traits. [`AgentSpec::partial`] admits a subset, which is only useful for
/// comparing trait maps with [`crate::graph::ccf`]; such specs cannot be
/// stored in a knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentSpec {
    entries: BTreeMap<Trait, bool>,
}

impl AgentSpec {
    /// Full spec from flags in canonical order.
    pub fn new(bits: [bool; 8]) -> Self {
        AgentSpec {
            entries: Trait::ALL.into_iter().zip(bits).collect(),
        }
    }

    pub fn partial(entries: impl IntoIterator<Item = (Trait, bool)>) -> Self {
        AgentSpec {
            entries: entries.into_iter().collect(),
        }
    }

    /// Parses named integer flags, requiring every canonical trait.
    pub fn from_named<'a>(
        entries: impl IntoIterator<Item = (&'a str, i64)>,
    ) -> Result<Self, SpecError> {
        let mut map = BTreeMap::new();
        for (name, value) in entries {
            let t: Trait = name.parse()?;
            let flag = match value {
                0 => false,
                1 => true,
                _ => {
                    return Err(SpecError::NonBinary {
                        name: name.to_string(),
                        value,
                    })
                }
            };
            map.insert(t, flag);
        }
        if let Some(missing) = Trait::ALL.into_iter().find(|t| !map.contains_key(t)) {
            return Err(SpecError::MissingTrait(missing));
        }
        Ok(AgentSpec { entries: map })
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == Trait::ALL.len()
    }

    pub fn get(&self, t: Trait) -> Option<bool> {
        self.entries.get(&t).copied()
    }

    /// Flag for a trait, treating an absent trait as 0.
    pub fn has(&self, t: Trait) -> bool {
        self.get(t).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Trait, bool)> + '_ {
        self.entries.iter().map(|(t, v)| (*t, *v))
    }

    pub fn trait_names(&self) -> String {
        self.entries
            .keys()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Flags as 0.0/1.0 in canonical order (full specs only).
    pub fn as_features(&self) -> [f64; 8] {
        Trait::ALL.map(|t| if self.has(t) { 1.0 } else { 0.0 })
    }
}

impl fmt::Display for AgentSpec {
    /// Eight `0`/`1` characters in canonical order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in Trait::ALL {
            f.write_str(if self.has(t) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for AgentSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 8 || !bytes.iter().all(|b| *b == b'0' || *b == b'1') {
            return Err(SpecError::BadBits(s.to_string()));
        }
        let mut bits = [false; 8];
        for (slot, b) in bits.iter_mut().zip(bytes) {
            *slot = *b == b'1';
        }
        Ok(AgentSpec::new(bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_round_trip() {
        let spec: AgentSpec = "11001010".parse().unwrap();
        assert!(spec.has(Trait::Conv) && spec.has(Trait::Dr) && spec.has(Trait::Wide));
        assert!(!spec.has(Trait::Deep));
        assert_eq!(spec.to_string(), "11001010");
        assert!(spec.is_full());
    }

    #[test]
    fn rejects_bad_bit_strings() {
        assert!("1100101".parse::<AgentSpec>().is_err());
        assert!("1100102x".parse::<AgentSpec>().is_err());
    }

    #[test]
    fn named_parse_requires_all_traits_and_binary_values() {
        let mut named: Vec<(&str, i64)> = Trait::ALL.iter().map(|t| (t.name(), 1)).collect();
        assert!(AgentSpec::from_named(named.clone()).is_ok());

        named[3].1 = 2;
        assert_eq!(
            AgentSpec::from_named(named.clone()),
            Err(SpecError::NonBinary {
                name: "bn".into(),
                value: 2
            })
        );

        named[3] = ("batchnorm", 1);
        let err = AgentSpec::from_named(named.clone()).unwrap_err();
        assert_eq!(err.to_string(), "unknown trait \"batchnorm\"");

        named.remove(3);
        assert_eq!(
            AgentSpec::from_named(named),
            Err(SpecError::MissingTrait(Trait::Bn))
        );
    }
}
