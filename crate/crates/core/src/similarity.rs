//! Cosine similarity over dense embedding vectors.
//!
//! Vectors are not pre-normalized in storage; similarity is
//! `dot(a,b) / (‖a‖·‖b‖)` computed on demand.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity of two vectors, clamped to [-1, 1] so rounding on
/// exact duplicates cannot exceed the mathematical range. A zero vector
/// has similarity 0 with everything, including itself.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine distance `1 - cosine_similarity`, the metric used for tag
/// clustering.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_similarity(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_similarity_one() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_similarity_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]), 0.0);
    }

    #[test]
    fn zero_vector_is_similar_to_nothing() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn scale_invariance() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, -1.0, 0.5];
        let b2: [f64; 3] = [8.0, -2.0, 1.0];
        assert!((cosine_similarity(&a, &b) - cosine_similarity(&a, &b2)).abs() < 1e-12);
    }
}
