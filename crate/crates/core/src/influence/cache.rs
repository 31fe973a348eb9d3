use std::path::Path;

use rayon::prelude::*;

use crate::datasets::{DataError, LabeledSeries};
use crate::error::{Error, Result};

use crate::nets::{Checkpoint, Classifier};

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &str = "TARDIFF-GCACHE";

/// Which guidance samples contribute to `G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    /// Only the most frequent class of the guidance set.
    MajorityOnly,
    /// Only the least frequent class of the guidance set.
    MinorityOnly,
}

impl ClassFilter {
    pub fn name(self) -> &'static str {
        match self {
            ClassFilter::All => "all",
            ClassFilter::MajorityOnly => "majority",
            ClassFilter::MinorityOnly => "minority",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(ClassFilter::All),
            "majority" | "majority-only" => Some(ClassFilter::MajorityOnly),
            "minority" | "minority-only" => Some(ClassFilter::MinorityOnly),
            _ => None,
        }
    }

    /// Content digest of the samples this filter keeps from `set`; equals
    /// the `guidance_digest` of a cache built over `set` with this filter.
    pub fn guidance_digest(self, set: &[LabeledSeries]) -> String {
        guidance_digest(&self.select(set))
    }

    fn select(self, set: &[LabeledSeries]) -> Vec<&LabeledSeries> {
        if self == ClassFilter::All {
            return set.iter().collect();
        }
        let classes = set.iter().map(|s| s.y).max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; classes];
        for s in set {
            counts[s.y] += 1;
        }
        let present = counts.iter().enumerate().filter(|(_, &c)| c > 0);
        let target = match self {
            // Ties resolve to the lower class id.
            ClassFilter::MajorityOnly => present.max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map(|(k, _)| k),
            ClassFilter::MinorityOnly => present.min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0))).map(|(k, _)| k),
            ClassFilter::All => unreachable!(),
        };
        set.iter().filter(|s| Some(s.y) == target).collect()
    }
}

/// Mean task-loss gradient over a guidance set at a fixed classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCache {
    pub g: Vec<f64>,
    pub guidance_size: usize,
    pub phi_hash: String,
    pub arch_id: String,
    pub filter: ClassFilter,
    /// Content digest of the guidance samples that produced `g`.
    pub guidance_digest: String,
}

fn pairwise_sum(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    match rows.len() {
        0 => vec![0.0; n],
        1 => rows[0].clone(),
        len => {
            let (a, b) = rows.split_at(len / 2);
            let mut left = pairwise_sum(a, n);
            let right = pairwise_sum(b, n);
            left.iter_mut().zip(right).for_each(|(l, r)| *l += r);
            left
        }
    }
}

fn guidance_digest(samples: &[&LabeledSeries]) -> String {
    // Order-insensitive: hash the sorted per-sample digests.
    let mut per: Vec<String> = samples
        .iter()
        .map(|s| {
            let mut bytes: Vec<u8> = s.x.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            bytes.extend_from_slice(&(s.y as u64).to_le_bytes());
            crate::digest::sha256_hex(&bytes)
        })
        .collect();
    per.sort_unstable();
    crate::digest::sha256_hex(per.concat().as_bytes())
}

fn build(clf: &Classifier, phi_hash: &str, guidance: &[LabeledSeries], filter: ClassFilter) -> Result<GradientCache> {
    if guidance.is_empty() {
        return Err(Error::InvalidArgument("guidance set is empty".into()));
    }
    let chosen = filter.select(guidance);
    if chosen.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "class filter {} leaves no guidance samples",
            filter.name()
        )));
    }
    for s in &chosen {
        clf.check_input(&s.x).map_err(|_| Error::ArchMismatch {
            expected: format!("[{}, {}] series", clf.config.series_len, clf.config.channels),
            found: format!("{:?}", s.x.shape()),
        })?;
    }
    // Per-sample gradients in parallel; the reduction tree depends only on
    // the (content-sorted) sample order, so G is reproducible bit for bit.
    let mut ordered = chosen.clone();
    ordered.sort_by(|a, b| {
        a.y.cmp(&b.y).then_with(|| {
            a.x.data()
                .iter()
                .zip(b.x.data())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let grads: Vec<Vec<f64>> = ordered
        .par_iter()
        .map(|s| clf.param_grad(&s.x, s.y))
        .collect::<Result<_>>()?;
    let n = ordered.len() as f64;
    let g: Vec<f64> = pairwise_sum(&grads, clf.params.len()).into_iter().map(|v| v / n).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(crate::gradcore::GradError::NonFinite { op: "build_cache" }.into());
    }
    Ok(GradientCache {
        g,
        guidance_size: ordered.len(),
        phi_hash: phi_hash.to_string(),
        arch_id: clf.params.arch_id.clone(),
        filter,
        guidance_digest: guidance_digest(&ordered),
    })
}

/// `G = (1/N_g) Σ_j ∇_φ ℓ(x'_j, y'_j; φ*)` over the whole guidance set.
pub fn build_cache(phi: &Checkpoint, guidance: &[LabeledSeries]) -> Result<GradientCache> {
    class_conditional_cache(phi, guidance, ClassFilter::All)
}

/// [`build_cache`] restricted to the guidance samples kept by `filter`.
pub fn class_conditional_cache(phi: &Checkpoint, guidance: &[LabeledSeries], filter: ClassFilter) -> Result<GradientCache> {
    let clf = Classifier::from_checkpoint(phi)?;
    build(&clf, &phi.digest(), guidance, filter)
}

impl GradientCache {
    pub fn for_classifier(clf: &Classifier, phi_hash: &str, guidance: &[LabeledSeries], filter: ClassFilter) -> Result<Self> {
        build(clf, phi_hash, guidance, filter)
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{MAGIC}\nversion={CACHE_VERSION}\nphi_hash={}\narch_id={}\nguidance_size={}\nclass_filter={}\n\
             guidance_digest={}\nlen={}\nend\n",
            self.phi_hash,
            self.arch_id,
            self.guidance_size,
            self.filter.name(),
            self.guidance_digest,
            self.g.len()
        )
        .into_bytes();
        for v in &self.g {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fmt = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let (pairs, start) = crate::datasets::io_parse_header(path, bytes, MAGIC)?;
        let get = |k: &str| crate::datasets::io_header_value(path, &pairs, k);
        let version = get("version")?;
        if version != CACHE_VERSION.to_string() {
            return Err(DataError::Version {
                path: path.to_path_buf(),
                found: version.to_string(),
            }
            .into());
        }
        let len: usize = get("len")?.parse().map_err(|_| fmt("len must be an integer".into()))?;
        let guidance_size: usize = get("guidance_size")?
            .parse()
            .map_err(|_| fmt("guidance_size must be an integer".into()))?;
        if guidance_size == 0 {
            return Err(fmt("guidance_size must be at least 1".into()));
        }
        let filter = ClassFilter::parse(get("class_filter")?).ok_or_else(|| fmt("unknown class_filter".into()))?;
        let payload = &bytes[start..];
        if payload.len() != 8 * len {
            return Err(DataError::Truncated {
                path: path.to_path_buf(),
                offset: bytes.len(),
                needed: (8 * len).saturating_sub(payload.len()),
            }
            .into());
        }
        let g: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(fmt("cache holds non-finite entries".into()));
        }
        Ok(Self {
            g,
            guidance_size,
            phi_hash: get("phi_hash")?.to_string(),
            arch_id: get("arch_id")?.to_string(),
            filter,
            guidance_digest: get("guidance_digest")?.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::Tensor;
    use crate::nets::{Activation, ClassifierConfig, TrainingMeta};
    use crate::seeding;

    fn ckpt() -> Checkpoint {
        Classifier::new(
            ClassifierConfig {
                series_len: 3,
                channels: 2,
                hidden: vec![4],
                num_classes: 2,
                activation: Activation::Tanh,
            },
            3,
        )
        .unwrap()
        .to_checkpoint(TrainingMeta {
            seed: 3,
            steps: 0,
            final_loss: 0.0,
        })
    }

    fn set(n: usize, seed: u64) -> Vec<LabeledSeries> {
        let mut r = seeding::rng(seed);
        (0..n)
            .map(|i| LabeledSeries {
                id: i as u64,
                x: Tensor::new(vec![3, 2], seeding::normal_vec(&mut r, 6)).unwrap(),
                y: usize::from(i % 4 == 0),
            })
            .collect()
    }

    #[test]
    fn single_sample_cache_is_its_gradient() {
        let ck = ckpt();
        let s = set(1, 1);
        let cache = build_cache(&ck, &s).unwrap();
        let clf = Classifier::from_checkpoint(&ck).unwrap();
        assert_eq!(cache.g, clf.param_grad(&s[0].x, s[0].y).unwrap());
        assert_eq!(cache.guidance_size, 1);
    }

    #[test]
    fn two_sample_mean_and_duplication() {
        let ck = ckpt();
        let s = set(2, 2);
        let clf = Classifier::from_checkpoint(&ck).unwrap();
        let a = clf.param_grad(&s[0].x, s[0].y).unwrap();
        let b = clf.param_grad(&s[1].x, s[1].y).unwrap();
        let cache = build_cache(&ck, &s).unwrap();
        for ((g, p), q) in cache.g.iter().zip(&a).zip(&b) {
            assert!((g - (0.5 * p + 0.5 * q)).abs() < 1e-12);
        }
        let tripled: Vec<LabeledSeries> = s.iter().chain(&s).chain(&s).cloned().collect();
        let c3 = build_cache(&ck, &tripled).unwrap();
        for (x, y) in c3.g.iter().zip(&cache.g) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariant() {
        let ck = ckpt();
        let s = set(17, 3);
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(build_cache(&ck, &s).unwrap(), build_cache(&ck, &rev).unwrap());
    }

    #[test]
    fn filters() {
        let ck = ckpt();
        let s = set(12, 4);
        let all = class_conditional_cache(&ck, &s, ClassFilter::All).unwrap();
        assert_eq!(all, build_cache(&ck, &s).unwrap());
        let minority = class_conditional_cache(&ck, &s, ClassFilter::MinorityOnly).unwrap();
        assert_eq!(minority.guidance_size, 3);
        let majority = class_conditional_cache(&ck, &s, ClassFilter::MajorityOnly).unwrap();
        assert_eq!(majority.guidance_size, 9);
        // One-class guidance: that class is both majority and minority.
        let only: Vec<LabeledSeries> = s.iter().filter(|x| x.y == 1).cloned().collect();
        let base = build_cache(&ck, &only).unwrap();
        let filtered = class_conditional_cache(&ck, &only, ClassFilter::MinorityOnly).unwrap();
        assert_eq!(base.g, filtered.g);
        assert!(build_cache(&ck, &[]).is_err());
    }

    #[test]
    fn arch_mismatch_is_rejected() {
        let ck = ckpt();
        let bad = vec![LabeledSeries {
            id: 0,
            x: Tensor::zeros(&[4, 2]),
            y: 0,
        }];
        assert!(matches!(build_cache(&ck, &bad), Err(Error::ArchMismatch { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.cache");
        let cache = class_conditional_cache(&ckpt(), &set(9, 5), ClassFilter::MinorityOnly).unwrap();
        cache.save(&path).unwrap();
        assert_eq!(GradientCache::load(&path).unwrap(), cache);
        let bytes = cache.to_bytes();
        assert!(GradientCache::from_bytes(&path, &bytes[..bytes.len() - 3]).is_err());
    }
}
