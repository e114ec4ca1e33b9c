//! Rectangular linear sum assignment by shortest augmenting paths.
//!
//! Minimizes total cost over injective row-to-column assignments for an
//! `nr x nc` cost matrix with `nr <= nc`. Deterministic for fixed
//! input: ties during column selection prefer an unassigned column and
//! otherwise resolve by scan order.

/// Solve the minimization problem; returns the assigned column for each
/// row. `cost` is row-major with `nr * nc` finite entries.
///
/// # Panics
/// Panics if `nr > nc` or `cost` has the wrong length; callers check
/// feasibility first.
#[allow(clippy::needless_range_loop)] // the index feeds the swap-remove below
pub fn solve_lsap_min(nr: usize, nc: usize, cost: &[f64]) -> Vec<usize> {
    assert!(nr <= nc, "lsap requires nr <= nc");
    assert_eq!(cost.len(), nr * nc, "cost matrix length mismatch");
    if nr == 0 {
        return Vec::new();
    }

    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut shortest_path_costs = vec![f64::INFINITY; nc];
    let mut path = vec![usize::MAX; nc];
    let mut col4row = vec![usize::MAX; nr];
    let mut row4col = vec![usize::MAX; nc];
    let mut scanned_rows = vec![false; nr];
    let mut scanned_cols = vec![false; nc];
    let mut remaining = vec![0usize; nc];

    for cur_row in 0..nr {
        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut num_remaining = nc;
        for (it, slot) in remaining.iter_mut().enumerate() {
            *slot = nc - it - 1;
        }
        scanned_rows.fill(false);
        scanned_cols.fill(false);
        shortest_path_costs.fill(f64::INFINITY);

        // Dijkstra-style search for the shortest augmenting path from
        // cur_row to an unassigned column, on reduced costs.
        let mut sink = usize::MAX;
        while sink == usize::MAX {
            let mut index = usize::MAX;
            let mut lowest = f64::INFINITY;
            scanned_rows[i] = true;
            for it in 0..num_remaining {
                let j = remaining[it];
                let r = min_val + cost[i * nc + j] - u[i] - v[j];
                if r < shortest_path_costs[j] {
                    path[j] = i;
                    shortest_path_costs[j] = r;
                }
                if shortest_path_costs[j] < lowest
                    || (shortest_path_costs[j] == lowest && row4col[j] == usize::MAX)
                {
                    lowest = shortest_path_costs[j];
                    index = it;
                }
            }
            min_val = lowest;
            debug_assert!(min_val.is_finite(), "augmenting path cost must be finite");
            let j = remaining[index];
            if row4col[j] == usize::MAX {
                sink = j;
            } else {
                i = row4col[j];
            }
            scanned_cols[j] = true;
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
        }

        u[cur_row] += min_val;
        for (ip, scanned) in scanned_rows.iter().enumerate() {
            if *scanned && ip != cur_row {
                u[ip] += min_val - shortest_path_costs[col4row[ip]];
            }
        }
        for (j, scanned) in scanned_cols.iter().enumerate() {
            if *scanned {
                v[j] -= min_val - shortest_path_costs[j];
            }
        }

        // Augment along the found path.
        let mut j = sink;
        loop {
            let ip = path[j];
            row4col[j] = ip;
            std::mem::swap(&mut col4row[ip], &mut j);
            if ip == cur_row {
                break;
            }
        }
    }
    col4row
}
