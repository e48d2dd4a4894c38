use super::instance::MilpInstance;
use super::lp::{FEAS_TOL, INT_TOL};

const MAX_ROUNDS: usize = 10;

/// Activity-based bound tightening on integer variables.
///
/// Returns the number of bound changes, or `None` when some row cannot be
/// satisfied within the bounds.
pub fn propagate(inst: &MilpInstance, lo: &mut [f64], hi: &mut [f64]) -> Option<usize> {
    let mut changes = 0;
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for row in &inst.rows {
            // Minimum activity split into a finite part and a count of
            // unbounded contributions.
            let mut finite = 0.0;
            let mut n_inf = 0;
            let mut inf_var = usize::MAX;
            for &(j, a) in &row.coeffs {
                let b = if a > 0.0 { lo[j] } else { hi[j] };
                if a == 0.0 {
                    continue;
                }
                if b.is_finite() {
                    finite += a * b;
                } else {
                    n_inf += 1;
                    inf_var = j;
                }
            }
            if n_inf == 0 && finite > row.rhs + FEAS_TOL * (1.0 + row.rhs.abs()) {
                return None;
            }
            if n_inf > 1 {
                continue;
            }
            for &(j, a) in &row.coeffs {
                if a == 0.0 || !inst.is_integer(j) || (n_inf == 1 && j != inf_var) {
                    continue;
                }
                let own = if a > 0.0 { lo[j] } else { hi[j] };
                let rest = if n_inf == 1 { finite } else { finite - a * own };
                let limit = (row.rhs - rest) / a;
                if a > 0.0 {
                    let cand = (limit + INT_TOL).floor();
                    if cand < hi[j] - 0.5 {
                        hi[j] = cand;
                        changes += 1;
                        changed = true;
                    }
                } else {
                    let cand = (limit - INT_TOL).ceil();
                    if cand > lo[j] + 0.5 {
                        lo[j] = cand;
                        changes += 1;
                        changed = true;
                    }
                }
                if lo[j] > hi[j] {
                    return None;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Some(changes)
}
