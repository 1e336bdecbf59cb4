use crate::scalar::Scalar;

/// n-step discounted returns over one trajectory.
///
/// `bootstrap[t]` is the value estimate at step `t`; the return at `t`
/// bootstraps from `bootstrap[t + n]` only when that step exists, so the
/// tail of the trajectory is truncated without a bootstrap.
pub fn n_step_return<T: Scalar>(rewards: &[T], bootstrap: &[T], n: usize, gamma: T) -> Vec<T> {
    assert!(n >= 1, "n_step_return needs n >= 1");
    assert_eq!(rewards.len(), bootstrap.len(), "one value estimate per step");
    let len = rewards.len();
    (0..len)
        .map(|t| {
            let mut g = T::zero();
            let mut discount = T::one();
            for k in 0..n {
                if t + k >= len {
                    break;
                }
                g += discount * rewards[t + k];
                discount *= gamma;
            }
            if t + n < len {
                g += discount * bootstrap[t + n];
            }
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_discount_is_reward() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let v = [9.0, 9.0, 9.0, 9.0];
        assert_eq!(n_step_return(&r, &v, 5, 0.0), r.to_vec());
        assert_eq!(n_step_return(&r, &v, 1, 0.0), r.to_vec());
    }

    #[test]
    fn geometric_sum_terminal() {
        let g = n_step_return(&[1.0; 5], &[100.0; 5], 5, 0.9);
        assert_abs_diff_eq!(g[0], 1.0 + 0.9 + 0.81 + 0.729 + 0.6561, epsilon = 1e-12);
        assert_abs_diff_eq!(g[0], 4.0951, epsilon = 1e-12);
        assert_abs_diff_eq!(g[4], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_step_bootstrap() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, -1.0, 4.0];
        let g = n_step_return(&r, &v, 1, 0.9);
        assert_abs_diff_eq!(g[0], 1.0 - 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 2.0 + 0.9 * 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mid_trajectory_bootstrap() {
        let r = [1.0; 8];
        let v = [2.0; 8];
        let g = n_step_return(&r, &v, 5, 0.5);
        let head = 1.0 + 0.5 + 0.25 + 0.125 + 0.0625;
        assert_abs_diff_eq!(g[0], head + 0.5f64.powi(5) * 2.0, epsilon = 1e-12);
        // t = 3: steps 3..8 all exist, no bootstrap (t + n = 8 = len)
        assert_abs_diff_eq!(g[3], head, epsilon = 1e-12);
    }
}
