use std::collections::BTreeMap;

use super::{CorpusError, CorpusExample, ExampleId, ExampleKey, TaskKind};
use crate::template::mix64;

const SALT_BALANCE: u64 = 0x0062_616c_616e_6365;
const SALT_SPLIT: u64 = 0x0073_706c_6974;

/// Anything that carries an example id and a task kind.
pub trait Keyed {
    fn example_id(&self) -> ExampleId;
    fn task_kind(&self) -> TaskKind;
}

impl Keyed for ExampleKey {
    fn example_id(&self) -> ExampleId {
        self.id
    }
    fn task_kind(&self) -> TaskKind {
        self.kind
    }
}

impl Keyed for CorpusExample {
    fn example_id(&self) -> ExampleId {
        self.example_id
    }
    fn task_kind(&self) -> TaskKind {
        self.task_kind
    }
}

/// Train and validation sets, each sorted by example id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub dropped_duplicates: usize,
    pub dropped_by_balance: usize,
}

impl<T> Default for Split<T> {
    fn default() -> Self {
        Split {
            train: Vec::new(),
            validation: Vec::new(),
            dropped_duplicates: 0,
            dropped_by_balance: 0,
        }
    }
}

fn rank(seed: u64, salt: u64, id: &ExampleId) -> (u64, ExampleId) {
    (mix64(id.prefix_u64() ^ mix64(seed ^ salt)), *id)
}

/// Largest-remainder apportionment of `total_quota` over `sizes`; ties in
/// the remainder go to the earlier entry.
fn apportion(sizes: &[usize], total_quota: usize) -> Vec<usize> {
    let n: u128 = sizes.iter().map(|&s| s as u128).sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let exact = total_quota as u128 * s as u128;
        quotas.push((exact / n) as usize);
        remainders.push((exact % n, i));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total_quota - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Deduplicates by example id, optionally downsamples every task kind to the
/// smallest kind's count, then holds out `val_size` examples stratified by
/// task kind. An empty input yields an empty split.
pub fn balance_and_split<T: Keyed>(
    mut items: Vec<T>,
    val_size: usize,
    seed: u64,
    balance: bool,
) -> Result<Split<T>, CorpusError> {
    items.sort_by_key(|x| x.example_id());
    let before = items.len();
    items.dedup_by_key(|x| x.example_id());
    let dropped_duplicates = before - items.len();

    let mut groups: BTreeMap<TaskKind, Vec<T>> = BTreeMap::new();
    let stage = items.first().map(|x| x.task_kind().stage());
    for x in items {
        groups.entry(x.task_kind()).or_default().push(x);
    }

    let mut dropped_by_balance = 0;
    if balance {
        if let Some(min) = groups.values().map(Vec::len).min() {
            for g in groups.values_mut() {
                if g.len() > min {
                    dropped_by_balance += g.len() - min;
                    g.sort_by_cached_key(|x| rank(seed, SALT_BALANCE, &x.example_id()));
                    g.truncate(min);
                }
            }
        }
    }

    let total: usize = groups.values().map(Vec::len).sum();
    if total == 0 {
        return Ok(Split {
            dropped_duplicates,
            dropped_by_balance,
            ..Split::default()
        });
    }
    if val_size > 0 && val_size >= total {
        return Err(CorpusError::ValidationTooLarge {
            stage: stage.expect("nonempty input"),
            val_size,
            total,
        });
    }

    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = apportion(&sizes, val_size);
    let mut train = Vec::with_capacity(total - val_size);
    let mut validation = Vec::with_capacity(val_size);
    for (mut g, q) in groups.into_values().zip(quotas) {
        g.sort_by_cached_key(|x| rank(seed, SALT_SPLIT, &x.example_id()));
        let rest = g.split_off(q);
        validation.extend(g);
        train.extend(rest);
    }
    train.sort_by_key(|x| x.example_id());
    validation.sort_by_key(|x| x.example_id());
    Ok(Split {
        train,
        validation,
        dropped_duplicates,
        dropped_by_balance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct K(ExampleId, TaskKind);

    impl Keyed for K {
        fn example_id(&self) -> ExampleId {
            self.0
        }
        fn task_kind(&self) -> TaskKind {
            self.1
        }
    }

    fn items(per_kind: &[(TaskKind, usize)]) -> Vec<K> {
        let mut out = Vec::new();
        for &(kind, n) in per_kind {
            for i in 0..n {
                let id = super::super::ExampleId::compute(kind, super::super::Polarity::Positive, &[format!("x:{i}")]);
                out.push(K(id, kind));
            }
        }
        out
    }

    #[test]
    fn exact_stratification() {
        let xs = items(&[
            (TaskKind::GeneProduct, 3),
            (TaskKind::GeneFuncInfer, 3),
            (TaskKind::ProtMolecular, 3),
        ]);
        let s = balance_and_split(xs, 3, 1, false).unwrap();
        let mut kinds: Vec<_> = s.validation.iter().map(|k| k.1).collect();
        kinds.sort();
        assert_eq!(
            kinds,
            [TaskKind::GeneProduct, TaskKind::GeneFuncInfer, TaskKind::ProtMolecular]
        );
        assert_eq!(s.train.len(), 6);
    }

    #[test]
    fn val_size_bounds() {
        let xs = items(&[(TaskKind::GeneProduct, 4)]);
        assert!(matches!(
            balance_and_split(xs.clone(), 4, 1, false),
            Err(CorpusError::ValidationTooLarge { .. })
        ));
        let s = balance_and_split(xs, 0, 1, false).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (4, 0));
        let s = balance_and_split(Vec::<K>::new(), 10, 1, false).unwrap();
        assert!(s.train.is_empty() && s.validation.is_empty());
    }

    #[test]
    fn balancing_downsamples_to_minimum() {
        let xs = items(&[(TaskKind::GeneProduct, 10), (TaskKind::GeneFuncInfer, 4)]);
        let s = balance_and_split(xs, 2, 9, true).unwrap();
        assert_eq!(s.dropped_by_balance, 6);
        assert_eq!(s.train.len() + s.validation.len(), 8);
    }

    #[test]
    fn duplicates_removed() {
        let mut xs = items(&[(TaskKind::GeneProduct, 5)]);
        xs.push(xs[0].clone());
        let s = balance_and_split(xs, 1, 2, false).unwrap();
        assert_eq!(s.dropped_duplicates, 1);
        assert_eq!(s.train.len() + s.validation.len(), 5);
    }

    #[test]
    fn apportion_is_within_one_of_proportional() {
        let sizes = [7, 13, 1, 0, 29];
        for quota in 0..50 {
            let q = apportion(&sizes, quota);
            assert_eq!(q.iter().sum::<usize>(), quota);
            for (&s, &qi) in sizes.iter().zip(&q) {
                let exact = quota as f64 * s as f64 / 50.0;
                assert!((qi as f64 - exact).abs() < 1.0 + 1e-12);
            }
        }
    }
}
