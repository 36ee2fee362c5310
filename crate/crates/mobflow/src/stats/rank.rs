//! Ranking with mid-rank tie handling.

/// 1-based ranks; tied values share the average of the ranks they occupy.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_get_ordinal_ranks() {
        assert_eq!(mid_ranks(&[30.0, 10.0, 20.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn ties_share_the_average_rank() {
        assert_eq!(mid_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn all_equal_values_share_the_middle_rank() {
        assert_eq!(mid_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn rank_sum_is_preserved_under_ties() {
        let with_ties = mid_ranks(&[1.0, 1.0, 2.0, 2.0, 2.0]);
        let total: f64 = with_ties.iter().sum();
        assert_eq!(total, 15.0, "ranks must always sum to n(n+1)/2");
    }
}
