use std::collections::HashMap;

use agentclust::graph::LabelMap;
use agentclust::metrics::{nmi, rand_index, NmiNormalization};
use agentclust::{NodeId, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    partition: Partition,
    labels: LabelMap,
    pred: Vec<usize>,
    truth: Vec<usize>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..=300);
    let k_pred = rng.random_range(1..=n.min(12));
    let k_true = rng.random_range(1..=n.min(12));
    let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_pred)).collect();
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_true)).collect();
    let ids: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("x{i}"))).collect();
    let mut clusters = vec![Vec::new(); k_pred];
    for (i, &c) in pred.iter().enumerate() {
        clusters[c].push(ids[i].clone());
    }
    clusters.retain(|c| !c.is_empty());
    let labels = ids
        .iter()
        .zip(&truth)
        .map(|(id, t)| (id.clone(), format!("L{t}")))
        .collect();
    Case {
        partition: Partition::new(clusters),
        labels,
        pred,
        truth,
    }
}

fn plogp_entropy(xs: &[usize]) -> f64 {
    let n = xs.len() as f64;
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &x in xs {
        *counts.entry(x).or_default() += 1.0;
    }
    -counts.values().map(|c| (c / n) * (c / n).ln()).sum::<f64>()
}

fn brute_nmi(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> f64 {
    let n = pred.len() as f64;
    let hu = plogp_entropy(pred);
    let hv = plogp_entropy(truth);
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pu: HashMap<usize, f64> = HashMap::new();
    let mut pv: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in pred.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pu.entry(a).or_default() += 1.0 / n;
        *pv.entry(b).or_default() += 1.0 / n;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &p)| p * (p / (pu[&a] * pv[&b])).ln())
        .sum();
    let denom = match norm {
        NmiNormalization::Arithmetic => (hu + hv) / 2.0,
        NmiNormalization::Sqrt => (hu * hv).sqrt(),
        NmiNormalization::Min => hu.min(hv),
        NmiNormalization::Max => hu.max(hv),
    };
    (mi / denom).clamp(0.0, 1.0)
}

fn brute_ri(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    if n < 2 {
        return 1.0;
    }
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (pred[i] == pred[j]) == (truth[i] == truth[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

#[test]
fn nmi_and_ri_match_brute_force_on_random_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let norms = [
        NmiNormalization::Arithmetic,
        NmiNormalization::Sqrt,
        NmiNormalization::Min,
        NmiNormalization::Max,
    ];
    for round in 0..1000 {
        let case = random_case(&mut rng);
        let norm = norms[round % norms.len()];
        let got = nmi(&case.partition, &case.labels, norm).unwrap();
        let want = brute_nmi(&case.pred, &case.truth, norm);
        assert!((got - want).abs() <= 1e-12, "round {round}: nmi {got} vs {want}");
        let got = rand_index(&case.partition, &case.labels).unwrap();
        let want = brute_ri(&case.pred, &case.truth);
        assert!((got - want).abs() <= 1e-12, "round {round}: ri {got} vs {want}");
    }
}

#[test]
fn hand_example_rand_index_is_one_half() {
    let ids = ["p", "q", "r", "s"].map(NodeId::from);
    let partition = Partition::new(vec![
        vec![ids[0].clone(), ids[1].clone(), ids[2].clone()],
        vec![ids[3].clone()],
    ]);
    let labels: LabelMap = ids
        .iter()
        .zip(["A", "A", "B", "B"])
        .map(|(id, l)| (id.clone(), l.to_string()))
        .collect();
    assert_eq!(rand_index(&partition, &labels).unwrap(), 0.5);
}

#[test]
fn metrics_ignore_cluster_order_and_label_names() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let case = random_case(&mut rng);
        let mut reversed = case.partition.clone();
        reversed.clusters.reverse();
        let renamed: LabelMap = case
            .labels
            .iter()
            .map(|(k, v)| (k.clone(), format!("renamed-{v}")))
            .collect();
        let a = nmi(&case.partition, &case.labels, NmiNormalization::Arithmetic).unwrap();
        let b = nmi(&reversed, &renamed, NmiNormalization::Arithmetic).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            rand_index(&case.partition, &case.labels).unwrap(),
            rand_index(&reversed, &renamed).unwrap()
        );
    }
}
