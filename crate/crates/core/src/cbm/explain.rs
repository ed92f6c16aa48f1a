use crate::numkit::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptRanking {
    /// For each example, concept indices by decreasing `|score|`.
    pub per_example: Vec<Vec<usize>>,
    /// Mean `|score|` per concept.
    pub importance: Vec<f64>,
    /// Concept indices by increasing importance (least explanatory first).
    pub global: Vec<usize>,
}

/// Orders concepts by explanation magnitude. Ties are broken by concept
/// index in both orderings.
pub fn rank_concepts(scores: &Matrix) -> ConceptRanking {
    let m = scores.cols();
    let per_example = scores
        .iter_rows()
        .map(|row| {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut importance = vec![0.0; m];
    for row in scores.iter_rows() {
        importance
            .iter_mut()
            .zip(row)
            .for_each(|(s, v)| *s += v.abs());
    }
    let n = scores.rows().max(1) as f64;
    importance.iter_mut().for_each(|s| *s /= n);
    let mut global: Vec<usize> = (0..m).collect();
    global.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(a.cmp(&b)));
    ConceptRanking {
        per_example,
        importance,
        global,
    }
}

/// Number of concepts hidden at masking fraction `f` out of `m`.
pub fn masked_count(fraction: f64, m: usize) -> usize {
    ((fraction * m as f64 + 1e-9).floor() as usize).min(m)
}

/// Mask hiding the `masked_count(fraction, m)` least explanatory concepts.
pub fn mask_least_explanatory(ranking: &ConceptRanking, fraction: f64) -> Vec<bool> {
    let m = ranking.global.len();
    let mut mask = vec![false; m];
    for &j in &ranking.global[..masked_count(fraction, m)] {
        mask[j] = true;
    }
    mask
}
