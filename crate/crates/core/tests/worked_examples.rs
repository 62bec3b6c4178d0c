use approx::assert_abs_diff_eq;
use perfit_core::pfs::{g_star, u3, zu3};
use perfit_core::{
    compute_all, dunn_posthoc, flag_aberrant, guttman_errors, kruskal_wallis, null_moments,
    wilcoxon_rank_sum, wilcoxon_rank_sum_with, Alternative, Correction, ItemStats64, Measure,
    PValueMethod, PfsRecord64, ResponseMatrix, Respondent, Source,
};

fn four_items() -> ItemStats64 {
    ItemStats64::from_proportions(vec![0.8, 0.6, 0.4, 0.2]).unwrap()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean and population variance of U3 over every pattern with total `r`.
fn enumerated_u3_moments(p: &[f64], r: usize) -> (f64, f64) {
    let c: Vec<f64> = p.iter().map(|&v| logit(v)).collect();
    let mut sorted = c.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let w_max: f64 = sorted[..r].iter().sum();
    let w_min: f64 = sorted[sorted.len() - r..].iter().sum();
    let values: Vec<f64> = (0u32..1 << p.len())
        .filter(|mask| mask.count_ones() as usize == r)
        .map(|mask| {
            let w: f64 = (0..p.len()).filter(|j| mask >> j & 1 == 1).map(|j| c[j]).sum();
            (w_max - w) / (w_max - w_min)
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn u3_hand_example() {
    let stats = four_items();
    let x = stats.easiest_first(&[0, 1, 1, 0]);
    assert_eq!(guttman_errors(&x), 2);
    assert_eq!(g_star::<f64>(2, 2, 4), Some(0.5));
    let c = [1.3863, 0.4055, -0.4055, -1.3863];
    let hand = (c[0] + c[1]) / (c[0] + c[1] - c[2] - c[3]);
    assert_abs_diff_eq!(u3(&x, &stats).unwrap(), hand, epsilon = 1e-4);
    assert_abs_diff_eq!(u3(&x, &stats).unwrap(), 0.5, epsilon = 1e-12);
}

#[test]
fn null_moments_agree_with_enumeration() {
    let p = [0.8, 0.6, 0.4, 0.2];
    let m = null_moments(&four_items(), 2).unwrap();
    let (mean, var) = enumerated_u3_moments(&p, 2);
    assert_abs_diff_eq!(m.expected, mean, epsilon = 1e-12);
    assert_abs_diff_eq!(m.variance, var, epsilon = 1e-12);
    assert_abs_diff_eq!(m.expected, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(m.variance, 0.1083, epsilon = 1e-4);

    // a skewed item set exercises every score level
    let p = [0.93, 0.81, 0.77, 0.52, 0.5, 0.33, 0.12];
    let stats = ItemStats64::from_proportions(p.to_vec()).unwrap();
    for r in 1..p.len() {
        let m = null_moments(&stats, r).unwrap();
        let (mean, var) = enumerated_u3_moments(&p, r);
        assert_abs_diff_eq!(m.expected, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(m.variance, var, epsilon = 1e-12);
    }
}

#[test]
fn zu3_hand_examples() {
    let stats = four_items();
    let m = null_moments(&stats, 2).unwrap();
    assert_abs_diff_eq!(zu3(0.5, &m).unwrap(), 0.0, epsilon = 1e-12);
    let guttman = u3(&stats.easiest_first(&[1, 1, 0, 0]), &stats).unwrap();
    assert_eq!(guttman, 0.0);
    assert_abs_diff_eq!(zu3(guttman, &m).unwrap(), -1.519, epsilon = 1e-3);
    assert_abs_diff_eq!(zu3(m.expected, &m).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn symmetric_logits_and_two_items() {
    let stats = ItemStats64::from_proportions(vec![0.9, 0.7, 0.3, 0.1]).unwrap();
    for r in 1..4 {
        let m = null_moments(&stats, r).unwrap();
        let expected = stats.w_max(r) / (stats.w_max(r) - stats.w_min(r));
        assert_abs_diff_eq!(m.expected, expected, epsilon = 1e-12);
    }
    let two = ItemStats64::from_proportions(vec![0.7, 0.4]).unwrap();
    let m = null_moments(&two, 1).unwrap();
    let (c0, c1) = (logit(0.7), logit(0.4));
    let sigma2 = ((c0 - c1) / 2.0).powi(2);
    let span = c0 - c1;
    assert_abs_diff_eq!(m.variance * span * span, sigma2, epsilon = 1e-12);
}

#[test]
fn flagging_uses_strict_threshold() {
    let rec = |id: &str, z: Option<f64>, valid: bool| PfsRecord64 {
        respondent_id: id.into(),
        source: Source::Human,
        r: 2,
        g: 0,
        g_star: None,
        u3: None,
        zu3: z,
        valid,
    };
    let recs = [rec("a", Some(1.7), true), rec("b", Some(1.2), true), rec("c", Some(-0.3), true)];
    assert_eq!(flag_aberrant(&recs, Measure::ZU3, 1.645), ["a"]);
    assert!(flag_aberrant::<f64>(&[], Measure::ZU3, 1.645).is_empty());
    let invalid = [rec("a", None, false), rec("b", None, false)];
    assert!(flag_aberrant(&invalid, Measure::ZU3, -10.0).is_empty());
}

#[test]
fn all_patterns_of_a_score_standardize_exactly() {
    let rows: Vec<Vec<u8>> = (0u8..16)
        .filter(|m| m.count_ones() == 2)
        .map(|m| (0..4).map(|j| m >> j & 1).collect())
        .collect();
    let people = (0..rows.len()).map(|k| Respondent::new(format!("r{k}"), Source::Human)).collect();
    let items = (1..=4).map(|j| format!("q{j}")).collect();
    let m = ResponseMatrix::from_rows(people, items, &rows).unwrap();
    // every item is answered by exactly half, so difficulties come from a reference
    let stats = four_items();
    let recs = perfit_core::compute_all_with::<f64>(&m, &stats).unwrap();
    let z: Vec<f64> = recs.iter().map(|r| r.zu3.unwrap()).collect();
    let mean = z.iter().sum::<f64>() / 6.0;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
    assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
    // estimated from the matrix itself every logit is 0 and U3 is undefined
    let flat = compute_all::<f64>(&m).unwrap();
    assert!(flat.iter().all(|r| !r.valid && r.u3.is_none()));
}

#[test]
fn rank_sum_small_case_is_close_to_exact() {
    let a = [1.0, 2.0];
    let b = [3.0, 4.0];
    let exact = wilcoxon_rank_sum_with(&a, &b, Alternative::Less, PValueMethod::Exact).unwrap();
    assert_abs_diff_eq!(exact.p_value, 1.0 / 6.0, epsilon = 1e-12);
    let approx = wilcoxon_rank_sum(&a, &b, Alternative::Less).unwrap();
    assert!((approx.p_value - 1.0 / 6.0).abs() < 0.03);

    let same = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], Alternative::TwoSided).unwrap();
    assert_eq!(same.p_value, 1.0);
    assert_eq!(same.z, Some(0.0));
}

#[test]
fn kruskal_wallis_examples() {
    let same = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
    assert_abs_diff_eq!(same.statistic, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(same.p_value, 1.0, epsilon = 1e-12);

    let groups = [vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
    // H = 12/(N(N+1)) Σ n_i R̄_i² − 3(N+1)
    let h = 12.0 / 42.0 * (2.0 * 1.5f64.powi(2) + 2.0 * 3.5f64.powi(2) + 2.0 * 5.5f64.powi(2)) - 21.0;
    let kw = perfit_core::kruskal_wallis_with(&groups, PValueMethod::Asymptotic).unwrap();
    assert_abs_diff_eq!(kw.statistic, h, epsilon = 1e-12);
    assert_abs_diff_eq!(kw.statistic, 4.571, epsilon = 1e-3);
    assert_abs_diff_eq!(kw.p_value, 0.1017, epsilon = 1e-4);

    let separated: Vec<Vec<f64>> = (0..3)
        .map(|g| (0..15).map(|i| (g * 100 + i) as f64).collect())
        .collect();
    let kw = kruskal_wallis(&separated).unwrap();
    assert!(kw.p_value < 0.001);
    assert_eq!(kw.group_sizes, [15, 15, 15]);
}

#[test]
fn dunn_examples() {
    let same = [vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
    let pairs = dunn_posthoc(&same, Correction::Bonferroni).unwrap();
    assert!(pairs.iter().all(|t| (t.p_value - 1.0).abs() < 1e-12));

    let groups = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
    let pairs = dunn_posthoc(&groups, Correction::Bonferroni).unwrap();
    assert_eq!(pairs.len(), 3);
    let extreme = &pairs[1];
    assert_eq!(extreme.group_sizes, [3, 3]);
    assert!(pairs.iter().all(|t| extreme.p_value <= t.p_value));
    for s in &pairs {
        for t in &pairs {
            if s.z.unwrap().abs() > t.z.unwrap().abs() {
                assert!(s.p_value <= t.p_value);
            }
        }
        let raw = s.p_unadjusted.unwrap();
        assert_abs_diff_eq!(s.p_value, (3.0 * raw).min(1.0), epsilon = 1e-15);
    }
}
