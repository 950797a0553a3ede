//! Measurement count tables and their post-processing.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Which bitstring positions hold data and flag outcomes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub data: Vec<usize>,
    pub flags: Vec<usize>,
}

/// Outcome histogram. Bitstring character `k` is bit position `k`; with the
/// standard layout the leftmost character is qubit 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub n_bits: usize,
    pub bit_layout: BitLayout,
    pub counts: BTreeMap<String, u64>,
}

impl CountsTable {
    /// Empty table whose first `n_data` positions are data bits and the
    /// remaining `n_flags` are flags.
    pub fn new(n_data: usize, n_flags: usize) -> Self {
        Self {
            n_bits: n_data + n_flags,
            bit_layout: BitLayout { data: (0..n_data).collect(), flags: (n_data..n_data + n_flags).collect() },
            counts: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn add(&mut self, bits: impl Into<String>, count: u64) {
        let bits = bits.into();
        debug_assert_eq!(bits.len(), self.n_bits);
        if count > 0 {
            *self.counts.entry(bits).or_insert(0) += count;
        }
    }

    /// Adds another table with the same layout.
    pub fn merge(&mut self, other: &CountsTable) {
        debug_assert_eq!(self.bit_layout, other.bit_layout);
        for (k, &v) in &other.counts {
            self.add(k.clone(), v);
        }
    }

    fn data_bits<'a>(&self, key: &'a str) -> impl Iterator<Item = u8> + 'a {
        let bytes = key.as_bytes();
        let data = self.bit_layout.data.clone();
        data.into_iter().map(move |p| bytes[p])
    }

    pub fn validate(&self) -> Result<()> {
        let mut positions: Vec<usize> = self.bit_layout.data.iter().chain(&self.bit_layout.flags).copied().collect();
        positions.sort_unstable();
        if positions != (0..self.n_bits).collect::<Vec<_>>() {
            return Err(Error::Parse("bit_layout must cover every bit position once".into()));
        }
        for k in self.counts.keys() {
            if k.len() != self.n_bits || !k.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::Parse(format!("bad bitstring key {k:?}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counts serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: CountsTable = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

/// Post-selected counts and the fraction of shots that survived.
#[derive(Clone, Debug, PartialEq)]
pub struct Postselected {
    pub counts: CountsTable,
    pub retained_fraction: f64,
}

/// Keeps shots whose flag bits are all `0` and strips the flag bits.
pub fn postselect_flags(counts: &CountsTable) -> Result<Postselected> {
    let total = counts.total();
    if counts.bit_layout.flags.is_empty() {
        return Ok(Postselected { counts: counts.clone(), retained_fraction: 1.0 });
    }
    let mut out = CountsTable::new(counts.bit_layout.data.len(), 0);
    for (key, &c) in &counts.counts {
        let bytes = key.as_bytes();
        if counts.bit_layout.flags.iter().all(|&p| bytes[p] == b'0') {
            let data: String = counts.data_bits(key).map(char::from).collect();
            out.add(data, c);
        }
    }
    let kept = out.total();
    if kept == 0 {
        return Err(Error::EmptyPostselection { total });
    }
    Ok(Postselected { counts: out, retained_fraction: kept as f64 / total as f64 })
}

/// Mean of `(-1)^popcount` over the data bits. Returns `(parity, shots)`.
pub fn parity_expectation_from_counts(counts: &CountsTable) -> Result<(f64, u64)> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyInput("counts table is empty".into()));
    }
    let mut signed: i128 = 0;
    for (key, &c) in &counts.counts {
        let ones = counts.data_bits(key).filter(|&b| b == b'1').count();
        if ones % 2 == 0 {
            signed += c as i128;
        } else {
            signed -= c as i128;
        }
    }
    Ok((signed as f64 / total as f64, total))
}

/// Fraction of shots whose data bits are all zeros or all ones.
pub fn population_from_counts(counts: &CountsTable) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyInput("counts table is empty".into()));
    }
    let hits: u64 = counts
        .counts
        .iter()
        .filter(|(key, _)| {
            let mut bits = counts.data_bits(key);
            match bits.next() {
                None => true,
                Some(first) => bits.all(|b| b == first),
            }
        })
        .map(|(_, &c)| c)
        .sum();
    Ok(hits as f64 / total as f64)
}

/// Flips every bit of every shot independently with probability `p`.
pub fn apply_readout_flips(counts: &CountsTable, p: f64, seed: u64) -> Result<CountsTable> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("readout flip probability {p}")));
    }
    let mut out = CountsTable { counts: BTreeMap::new(), ..counts.clone() };
    for (stream, (key, &c)) in counts.counts.iter().enumerate() {
        let mut rng = stream_rng(seed, stream as u64);
        let mut local: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for _ in 0..c {
            let mut bits = key.as_bytes().to_vec();
            for b in bits.iter_mut() {
                if rng.random::<f64>() < p {
                    *b ^= 1;
                }
            }
            *local.entry(bits).or_insert(0) += 1;
        }
        for (bits, n) in local {
            out.add(String::from_utf8(bits).expect("ascii bits"), n);
        }
    }
    Ok(out)
}
