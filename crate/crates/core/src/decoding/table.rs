use std::collections::{BTreeMap, BTreeSet};

use super::DecoderConfig;
use crate::synth::{SnrCondition, SubjectId};
use crate::{Error, Result};

/// Identifies one NT value. Ordered by configuration, then condition, then
/// subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NtKey {
    pub config: DecoderConfig,
    pub condition: SnrCondition,
    pub subject_id: SubjectId,
}

/// A neural-tracking value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtValue {
    pub config: DecoderConfig,
    pub condition: SnrCondition,
    pub subject_id: SubjectId,
    pub value: f64,
}

impl NtValue {
    pub fn key(&self) -> NtKey {
        NtKey {
            config: self.config,
            condition: self.condition,
            subject_id: self.subject_id,
        }
    }
}

/// NT values for a cohort, kept in canonical order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NtTable {
    values: BTreeMap<NtKey, f64>,
}

impl NtTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: NtValue) -> Result<()> {
        if !(v.value.abs() <= 1.0) {
            return Err(Error::numerical(format!(
                "NT value {} for {} at {} ({}) lies outside [-1, 1]",
                v.value, v.config, v.condition, v.subject_id
            )));
        }
        self.values.insert(v.key(), v.value);
        Ok(())
    }

    pub fn get(&self, key: &NtKey) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NtValue> + '_ {
        self.values.iter().map(|(k, &value)| NtValue {
            config: k.config,
            condition: k.condition,
            subject_id: k.subject_id,
            value,
        })
    }

    pub fn extend(&mut self, other: NtTable) {
        self.values.extend(other.values);
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&NtKey) -> bool) {
        self.values.retain(|k, _| keep(k));
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        self.values
            .keys()
            .map(|k| k.subject_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn configs(&self) -> Vec<DecoderConfig> {
        self.values
            .keys()
            .map(|k| k.config)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Keys of `configs × conditions × subjects` that have no value.
    pub fn missing(&self, configs: &[DecoderConfig], subjects: &[SubjectId]) -> Vec<NtKey> {
        let mut out = Vec::new();
        for &config in configs {
            for condition in SnrCondition::ALL {
                for &subject_id in subjects {
                    let k = NtKey {
                        config,
                        condition,
                        subject_id,
                    };
                    if !self.values.contains_key(&k) {
                        out.push(k);
                    }
                }
            }
        }
        out
    }
}
