use proptest::prelude::*;
use screentree::matrix::CodeMatrix;
use screentree::tree::{
    grow, prune, select_subtree, unique_items_per_path, Constraint, GrowConfig, RegressionTree,
    SubtreeSequence,
};

fn matrix(rows: &[Vec<i32>]) -> CodeMatrix {
    let names = (1..=rows[0].len()).map(|j| format!("Q{j}")).collect();
    CodeMatrix::from_rows(names, rows).unwrap()
}

fn config(constraint: Constraint, min_node: usize) -> GrowConfig {
    GrowConfig {
        constraint,
        min_node,
        seed: 0,
    }
}

/// Data whose best tree splits Q1, then Q2, then Q1 again.
fn figure_one_data() -> (CodeMatrix, Vec<f64>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for q1 in 1..=3 {
        for q2 in 1..=5 {
            for q3 in 1..=4 {
                for _ in 0..10 {
                    let target = match (q1, q2) {
                        (1, _) => 0.05,
                        (_, q2) if q2 <= 3 => 0.2,
                        (2, _) => 0.45,
                        _ => 0.79,
                    };
                    rows.push(vec![q1, q2, q3]);
                    y.push(target);
                }
            }
        }
    }
    (matrix(&rows), y)
}

#[test]
fn figure_one_shape() {
    let (data, y) = figure_one_data();
    let seq = grow(&data, &y, &config(Constraint::MaxIpp(2), 5)).unwrap();
    let t = &seq.full;
    assert_eq!(t.depth(), 3);
    assert_eq!(unique_items_per_path(t), 2);
    assert_eq!(t.n_internal(), 3);
    assert_eq!(t.n_leaves(), 4);
    assert!((t.predict(&[3, 4, 1]) - 0.79).abs() < 1e-12);
    let root = t.nodes[0].split.unwrap();
    assert_eq!((t.items[root.item].as_str(), root.cutpoint), ("Q1", 1.5));
    // Holdout equal to the training data: full tree is exact; every step helps.
    let pruned = prune(&seq, &data, &y, 1e-4, 10).unwrap();
    assert_eq!(pruned.tree, *t);
    // maxIPP 1 cannot use Q2 at all.
    let one = grow(&data, &y, &config(Constraint::MaxIpp(1), 5)).unwrap();
    assert_eq!(one.full.split_items(), vec!["Q1".to_string()]);
}

fn leaf_means_match(tree: &RegressionTree, data: &CodeMatrix, y: &[f64]) {
    let mut sums = vec![0.0; tree.nodes.len()];
    let mut counts = vec![0usize; tree.nodes.len()];
    for i in 0..data.n_rows() {
        let leaf = tree.leaf_index(|j| data.code(i, j));
        assert!(tree.nodes[leaf].split.is_none());
        sums[leaf] += y[i];
        counts[leaf] += 1;
    }
    for (k, node) in tree.nodes.iter().enumerate() {
        if node.split.is_none() {
            assert_eq!(counts[k], node.n);
            assert!((sums[k] / counts[k] as f64 - node.value).abs() < 1e-12);
        }
    }
}

fn rmse(tree: &RegressionTree, data: &CodeMatrix, y: &[f64]) -> f64 {
    let pred = tree.predict_matrix(data).unwrap();
    (pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

fn is_pruned_version(small: &RegressionTree, big: &RegressionTree) -> bool {
    fn rec(s: &RegressionTree, i: usize, b: &RegressionTree, j: usize) -> bool {
        match (&s.nodes[i].split, &b.nodes[j].split) {
            (None, _) => s.nodes[i].value == b.nodes[j].value,
            (Some(x), Some(y)) => {
                x.item == y.item
                    && x.cutpoint == y.cutpoint
                    && rec(s, x.left, b, y.left)
                    && rec(s, x.right, b, y.right)
            }
            (Some(_), None) => false,
        }
    }
    rec(small, 0, big, 0)
}

fn check_sequence(seq: &SubtreeSequence, data: &CodeMatrix, y: &[f64]) {
    let fast = seq.holdout_rmse(data, y).unwrap();
    assert_eq!(seq.subtree(0).n_leaves(), 1);
    assert_eq!(seq.subtree(seq.len() - 1), seq.full);
    for i in 0..seq.len() {
        let t = seq.subtree(i);
        assert!((fast[i] - rmse(&t, data, y)).abs() < 1e-9);
        if i + 1 < seq.len() {
            let next = seq.subtree(i + 1);
            assert!(is_pruned_version(&t, &next));
            assert!(t.n_leaves() < next.n_leaves());
        }
    }
}

fn dataset() -> impl Strategy<Value = (Vec<Vec<i32>>, Vec<f64>)> {
    (2usize..=7, 60usize..=200).prop_flat_map(|(p, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(1i32..=4, p), n),
            proptest::collection::vec(0u8..=1, p),
            proptest::collection::vec(0.0f64..=1.0, n),
        )
            .prop_map(|(rows, signs, noise)| {
                // Targets depend on several items plus noise, so trees reuse items.
                let y = rows
                    .iter()
                    .zip(&noise)
                    .map(|(r, e)| {
                        let s: f64 = r
                            .iter()
                            .zip(&signs)
                            .map(|(&x, &sg)| if sg == 1 { x as f64 } else { -(x as f64) })
                            .sum();
                        let lin = 1.0 / (1.0 + (-0.6 * s).exp());
                        0.7 * lin + 0.3 * e
                    })
                    .collect();
                (rows, y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn maxipp_constraint_holds((rows, y) in dataset(), m in 1usize..=6) {
        let data = matrix(&rows);
        let seq = grow(&data, &y, &config(Constraint::MaxIpp(m), 5)).unwrap();
        prop_assert!(unique_items_per_path(&seq.full) <= m);
        for i in 0..seq.len() {
            prop_assert!(unique_items_per_path(&seq.subtree(i)) <= m);
        }
        leaf_means_match(&seq.full, &data, &y);
        check_sequence(&seq, &data, &y);
    }

    #[test]
    fn vacuous_constraint_is_plain_cart((rows, y) in dataset()) {
        let data = matrix(&rows);
        let p = rows[0].len();
        let a = grow(&data, &y, &config(Constraint::MaxIpp(p), 5)).unwrap();
        let b = grow(&data, &y, &config(Constraint::Unconstrained, 5)).unwrap();
        prop_assert_eq!(&a.full.nodes, &b.full.nodes);
        prop_assert_eq!(&a.appears_at, &b.appears_at);
    }

    #[test]
    fn max_depth_constraint_holds((rows, y) in dataset(), d in 1usize..=5) {
        let data = matrix(&rows);
        let seq = grow(&data, &y, &config(Constraint::MaxDepth(d), 5)).unwrap();
        prop_assert!(seq.full.depth() <= d);
    }

    #[test]
    fn cutpoints_between_adjacent_codes((rows, y) in dataset()) {
        let data = matrix(&rows);
        let seq = grow(&data, &y, &config(Constraint::MaxIpp(3), 5)).unwrap();
        for node in &seq.full.nodes {
            if let Some(s) = node.split {
                let support = data.support(s.item);
                prop_assert!(support.windows(2).any(|w| s.cutpoint == 0.5 * (w[0] + w[1]) as f64));
            }
            prop_assert!((0.0..=1.0).contains(&node.value));
        }
    }
}

/// Direct transcription of the plateau rule used as an oracle.
fn oracle_select(rmse: &[f64], threshold: f64, patience: usize) -> usize {
    let mut best = 0;
    let mut streak = 0;
    let mut i = 1;
    while i < rmse.len() && streak < patience {
        let met = rmse[i - 1] - rmse[i] > threshold;
        if met {
            best = i;
        }
        streak = if met { 0 } else { streak + 1 };
        i += 1;
    }
    best
}

#[test]
fn plateau_rule_matches_oracle() {
    use rand::Rng;
    let mut rng = screentree::stats::stream_rng(3, 0);
    for _ in 0..500 {
        let len = rng.random_range(1..40);
        let mut r = vec![1.0];
        for _ in 1..len {
            let drop = if rng.random::<f64>() < 0.5 { rng.random::<f64>() * 1e-3 } else { 0.0 };
            let last = *r.last().unwrap();
            r.push(last - drop);
        }
        let thr = 1e-4;
        let patience = rng.random_range(1..12);
        assert_eq!(select_subtree(&r, thr, patience), oracle_select(&r, thr, patience));
    }
    // Monotone improvement above the floor: deepest tree.
    let r: Vec<f64> = (0..15).map(|i| 1.0 - 0.01 * i as f64).collect();
    assert_eq!(select_subtree(&r, 1e-4, 10), 14);
}

#[test]
fn missing_item_is_reported() {
    let (data, y) = figure_one_data();
    let t = grow(&data, &y, &config(Constraint::MaxIpp(2), 5)).unwrap().full;
    let mut answers = std::collections::HashMap::new();
    answers.insert("Q1".to_string(), 3);
    assert!(t.predict_named(&answers).is_err());
    answers.insert("Q2".to_string(), 4);
    assert!((t.predict_named(&answers).unwrap() - 0.79).abs() < 1e-12);
}
