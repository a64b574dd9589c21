//! Per-record depth metric.

/// Depth of a record: `ln(tag_count) * base_loss`.
///
/// Undefined for untagged records (`None`); callers exclude those from
/// aggregates and count them. A single tag yields depth 0.
pub fn depth_metric(tag_count: usize, base_loss: f64) -> Option<f64> {
    if tag_count == 0 {
        return None;
    }
    Some(libm::log(tag_count as f64) * base_loss)
}
