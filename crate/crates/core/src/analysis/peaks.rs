use crate::error::{HfmError, Result};
use crate::sample::EmpiricalSample;
use crate::state::FeatureState;

/// A node of the peak tree. Leaves are the mixture components.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakNode {
    /// Most frequent member.
    pub apex: FeatureState,
    /// Fraction of the root sample held by this node.
    pub weight: f64,
    pub members: EmpiricalSample,
    /// Empty for a leaf, otherwise exactly two peaks.
    pub children: Vec<PeakNode>,
    /// Plug-in entropy of the member set.
    pub entropy_bits: f64,
}

impl PeakNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves with their path ids: the root is `"0"`, its children `"0.1"`
    /// and `"0.2"`, and so on.
    pub fn leaves(&self) -> Vec<(String, &PeakNode)> {
        let mut out = Vec::new();
        self.collect_leaves("0".to_string(), &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, id: String, out: &mut Vec<(String, &'a PeakNode)>) {
        if self.is_leaf() {
            out.push((id, self));
        } else {
            for (k, child) in self.children.iter().enumerate() {
                child.collect_leaves(format!("{id}.{}", k + 1), out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(PeakNode::depth).max().unwrap_or(0)
    }
}

/// Splits a sample into Hamming-separated peaks, recursively.
///
/// States are scanned by descending count (ties by state index). Each joins
/// the first peak while its distance to the nearest member is below
/// `floor(threshold)`; the first state that is not becomes the apex of the
/// second peak, and every later state joins the peak holding its nearest
/// member (ties go to the first). `threshold` defaults to `n / 3`.
pub fn peak_decompose(sample: &EmpiricalSample, threshold: Option<f64>) -> Result<PeakNode> {
    if sample.is_empty() {
        return Err(HfmError::EmptySample);
    }
    let threshold = threshold.unwrap_or(sample.width() as f64 / 3.0);
    if !(threshold >= 0.0) {
        return Err(HfmError::param("threshold", "must be non-negative"));
    }
    let cutoff = threshold.floor() as usize;
    Ok(build(sample.clone(), cutoff, sample.total() as f64))
}

fn build(members: EmpiricalSample, cutoff: usize, root_total: f64) -> PeakNode {
    let mut order: Vec<(&FeatureState, u64)> = members.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let apex = order[0].0.clone();
    let mut node = PeakNode {
        apex,
        weight: members.total() as f64 / root_total,
        entropy_bits: members.plugin_entropy_bits(),
        children: Vec::new(),
        members: EmpiricalSample::new(members.width()),
    };
    let split = split(&order, cutoff);
    if let Some((first, second)) = split {
        let make = |idx: &[usize]| {
            EmpiricalSample::from_counts(members.width(), idx.iter().map(|&i| (order[i].0.clone(), order[i].1)))
                .expect("widths match")
        };
        let (a, b) = (make(&first), make(&second));
        node.children = vec![build(a, cutoff, root_total), build(b, cutoff, root_total)];
    }
    node.members = members;
    node
}

fn nearest(peak: &[&FeatureState], s: &FeatureState) -> usize {
    peak.iter()
        .map(|m| m.hamming(s).expect("widths match"))
        .min()
        .unwrap_or(usize::MAX)
}

/// Indices into `order` of the two peaks, or `None` if everything fits the first.
fn split(order: &[(&FeatureState, u64)], cutoff: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut first_states = vec![order[0].0];
    let mut first = vec![0];
    let mut second_states: Vec<&FeatureState> = Vec::new();
    let mut second = Vec::new();
    for (i, (s, _)) in order.iter().enumerate().skip(1) {
        if second.is_empty() {
            let close = first_states.iter().any(|m| m.hamming(s).expect("widths match") < cutoff);
            if close {
                first_states.push(s);
                first.push(i);
            } else {
                second_states.push(s);
                second.push(i);
            }
        } else if nearest(&first_states, s) <= nearest(&second_states, s) {
            first_states.push(s);
            first.push(i);
        } else {
            second_states.push(s);
            second.push(i);
        }
    }
    (!second.is_empty()).then_some((first, second))
}
