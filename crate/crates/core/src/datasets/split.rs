use super::{DataError, DatasetBundle, LabeledSeries, Splits};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

fn mix(seed: u64, id: u64) -> u64 {
    // splitmix64 finalizer over the (seed, id) pair.
    let mut z = seed ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stratified halving of a sample set: within each class, members ordered by
/// a seeded hash of their id go alternately to the two halves.
pub fn halve(samples: &[LabeledSeries], seed: u64) -> Result<(Vec<LabeledSeries>, Vec<LabeledSeries>), DataError> {
    let classes = samples.iter().map(|s| s.y).max().map_or(0, |m| m + 1);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut members: Vec<&LabeledSeries> = samples.iter().filter(|s| s.y == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(DataError::Stratify {
                class: c,
                count: members.len(),
            });
        }
        members.sort_by_key(|s| (mix(seed, s.id), s.id));
        for (k, s) in members.into_iter().enumerate() {
            if k % 2 == 0 { &mut a } else { &mut b }.push(s.clone());
        }
    }
    a.sort_by_key(|s| s.id);
    b.sort_by_key(|s| s.id);
    Ok((a, b))
}

/// Allocate `total` slots across classes in proportion to `counts`, at least
/// one per class, by largest remainder.
fn allocate(counts: &[usize], total: usize, n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let mut assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(order.len() * 4) {
        if assigned >= total {
            break;
        }
        if (alloc[c] as f64) < quotas[c].ceil() {
            alloc[c] += 1;
            assigned += 1;
        }
    }
    alloc
}

/// Stratified split. Membership depends only on `(seed, sample ids)`, not on
/// the order samples appear in the bundle.
pub fn split(bundle: &DatasetBundle, ratios: SplitRatios, seed: u64) -> Result<DatasetBundle, DataError> {
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || ratios.train <= 0.0 || ratios.val <= 0.0 || ratios.test <= 0.0 {
        return Err(DataError::Degenerate(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let n = bundle.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); bundle.num_classes];
    for (i, s) in bundle.samples.iter().enumerate() {
        by_class[s.y].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    for (class, &count) in counts.iter().enumerate() {
        if count < 3 {
            return Err(DataError::Stratify { class, count });
        }
    }
    let n_val = (n as f64 * ratios.val).round() as usize;
    let n_test = (n as f64 * ratios.test).round() as usize;
    let val_alloc = allocate(&counts, n_val, n);
    let test_alloc = allocate(&counts, n_test, n);

    let mut splits = Splits::default();
    for (class, members) in by_class.iter_mut().enumerate() {
        if val_alloc[class] + test_alloc[class] >= members.len() {
            return Err(DataError::Stratify {
                class,
                count: members.len(),
            });
        }
        members.sort_by_key(|&i| {
            let id = bundle.samples[i].id;
            (mix(seed, id), id)
        });
        let (v, t) = (val_alloc[class], test_alloc[class]);
        splits.val.extend(&members[..v]);
        splits.test.extend(&members[v..v + t]);
        splits.train.extend(&members[v + t..]);
    }
    for list in [&mut splits.train, &mut splits.val, &mut splits.test] {
        list.sort_unstable();
    }
    let mut out = bundle.clone();
    out.splits = Some(splits);
    out.stats = None;
    Ok(out)
}
