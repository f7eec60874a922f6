use crate::error::{Error, Result};
use crate::rng::Stream;

/// Classes held by `client` under the label-skew layout: `{(client·p + j) mod C : j < p}`.
pub fn classes_for_client(client: usize, p: usize, classes: usize) -> Vec<usize> {
    let mut held: Vec<usize> = (0..p).map(|j| (client * p + j) % classes).collect();
    held.sort_unstable();
    held
}

/// Splits sample indices across `clients` so each client holds exactly `p`
/// distinct classes.
///
/// Client `i` is assigned the classes returned by [`classes_for_client`]. The
/// samples of each class are shuffled and dealt in near-equal contiguous
/// blocks (sizes differ by at most one) to the clients holding that class.
/// Every index goes to at most one client; each returned list is sorted.
pub fn label_partition(
    labels: &[usize],
    p: usize,
    clients: usize,
    rng: &mut Stream,
) -> Result<Vec<Vec<usize>>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if clients == 0 {
        return Err(Error::InvalidParameter("need at least one client".into()));
    }
    if p == 0 || p > classes {
        return Err(Error::InvalidParameter(format!(
            "classes per client p={p} must lie in 1..={classes}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for client in 0..clients {
        for c in classes_for_client(client, p, classes) {
            holders[c].push(client);
        }
    }

    let mut out: Vec<Vec<usize>> = vec![Vec::new(); clients];
    for (class, samples) in by_class.iter_mut().enumerate() {
        let owners = &holders[class];
        if owners.is_empty() {
            continue;
        }
        if samples.len() < owners.len() {
            return Err(Error::Data(format!(
                "class {class} has {} samples but {} clients need it",
                samples.len(),
                owners.len()
            )));
        }
        rng.shuffle(samples);
        let base = samples.len() / owners.len();
        let extra = samples.len() % owners.len();
        let mut start = 0;
        for (k, &owner) in owners.iter().enumerate() {
            let take = base + usize::from(k < extra);
            out[owner].extend_from_slice(&samples[start..start + take]);
            start += take;
        }
    }
    for list in out.iter_mut() {
        list.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn rng() -> Stream {
        Stream::new(5, Purpose::Partition, 0, 0)
    }

    fn balanced_labels(classes: usize, per_class: usize) -> Vec<usize> {
        (0..classes * per_class).map(|i| i % classes).collect()
    }

    #[test]
    fn one_class_per_client() {
        let labels = balanced_labels(10, 100);
        let parts = label_partition(&labels, 1, 10, &mut rng()).unwrap();
        for (client, part) in parts.iter().enumerate() {
            assert_eq!(part.len(), 100);
            assert!(part.iter().all(|&i| labels[i] == client));
        }
    }

    #[test]
    fn full_class_case_gives_every_class_to_everyone() {
        let labels = balanced_labels(10, 50);
        let parts = label_partition(&labels, 10, 10, &mut rng()).unwrap();
        for part in &parts {
            let set: BTreeSet<_> = part.iter().map(|&i| labels[i]).collect();
            assert_eq!(set.len(), 10);
        }
    }

    #[test]
    fn p_larger_than_classes_rejected() {
        let labels = balanced_labels(3, 10);
        assert!(label_partition(&labels, 4, 5, &mut rng()).is_err());
    }

    #[test]
    fn insufficient_samples_rejected() {
        let labels = vec![0, 1];
        assert!(label_partition(&labels, 1, 4, &mut rng()).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_sound(classes in 2usize..8, clients in 1usize..12, p_raw in 1usize..8, per_class in 12usize..40, seed in 0u64..1000) {
            let p = 1 + (p_raw - 1) % classes;
            let labels = balanced_labels(classes, per_class);
            let parts = label_partition(&labels, p, clients, &mut Stream::new(seed, Purpose::Partition, 0, 0)).unwrap();
            let mut seen = vec![false; labels.len()];
            for part in &parts {
                let held: BTreeSet<_> = part.iter().map(|&i| labels[i]).collect();
                prop_assert_eq!(held.len(), p);
                for &i in part {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            // near-equal split per class among holders
            for class in 0..classes {
                let sizes: Vec<usize> = parts
                    .iter()
                    .map(|part| part.iter().filter(|&&i| labels[i] == class).count())
                    .filter(|&n| n > 0)
                    .collect();
                if let (Some(lo), Some(hi)) = (sizes.iter().min(), sizes.iter().max()) {
                    prop_assert!(hi - lo <= 1);
                }
            }
        }
    }
}
