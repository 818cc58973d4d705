use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named physical parameters of a benchmark plus the ranges used when
/// generating randomized variants.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub name: String,
    pub horizon: usize,
    pub dt: f64,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl BenchmarkSpec {
    pub fn new(name: &str, horizon: usize, dt: f64, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            horizon,
            dt,
            seed: 0,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            ranges: BTreeMap::new(),
        }
    }

    pub fn with_range(mut self, key: &str, lo: f64, hi: f64) -> Self {
        self.ranges.insert(key.to_string(), (lo, hi));
        self
    }

    pub fn param(&self, key: &str) -> f64 {
        *self.params.get(key).unwrap_or_else(|| panic!("benchmark {} has no parameter {key}", self.name))
    }

    /// Overrides one entry; `horizon`, `dt` and `seed` are accepted as well.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "horizon" if value >= 1.0 && value.fract() == 0.0 => self.horizon = value as usize,
            "dt" if value > 0.0 => self.dt = value,
            "seed" if value >= 0.0 && value.fract() == 0.0 => self.seed = value as u64,
            "horizon" | "dt" | "seed" => return Err(Error::Config(format!("invalid value {value} for {key}"))),
            _ => match self.params.get_mut(key) {
                Some(v) => *v = value,
                None => return Err(Error::Config(format!("unknown parameter {key} for {}", self.name))),
            },
        }
        Ok(())
    }

    /// `key=value` lines, sorted by key.
    pub fn to_config_lines(&self) -> Vec<String> {
        let mut out = vec![format!("horizon={}", self.horizon), format!("dt={}", self.dt), format!("seed={}", self.seed)];
        out.extend(self.params.iter().map(|(k, v)| format!("{k}={v}")));
        out
    }
}

/// `k` variants with seeds `seed, seed + 1, …`; every parameter with a declared
/// range is drawn uniformly from it using a generator seeded by the variant seed.
pub fn randomize(spec: &BenchmarkSpec, k: usize) -> Vec<BenchmarkSpec> {
    (0..k as u64)
        .map(|i| {
            let mut s = spec.clone();
            s.seed = spec.seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            for (key, &(lo, hi)) in &spec.ranges {
                s.params.insert(key.clone(), if lo < hi { rng.gen_range(lo..hi) } else { lo });
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BenchmarkSpec {
        BenchmarkSpec::new("toy", 10, 0.1, &[("mass", 1.0), ("length", 0.5)])
            .with_range("mass", 0.5, 1.5)
            .with_range("length", 0.3, 0.7)
    }

    #[test]
    fn singleton_keeps_base_seed() {
        let v = randomize(&BenchmarkSpec { seed: 42, ..base() }, 1);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].seed, 42);
    }

    #[test]
    fn deterministic_and_in_range() {
        let a = randomize(&base(), 10);
        assert_eq!(a, randomize(&base(), 10));
        for s in &a {
            assert!((0.5..1.5).contains(&s.param("mass")));
            assert!((0.3..0.7).contains(&s.param("length")));
        }
        assert_ne!(a[0].param("mass"), a[1].param("mass"));
    }

    #[test]
    fn overrides() {
        let mut s = base();
        s.set("mass", 2.0).unwrap();
        s.set("horizon", 20.0).unwrap();
        assert_eq!(s.param("mass"), 2.0);
        assert_eq!(s.horizon, 20);
        assert!(s.set("nope", 1.0).is_err());
        assert!(s.set("horizon", 2.5).is_err());
        assert_eq!(s.to_config_lines()[0], "horizon=20");
    }
}
