//! Minimum-cost perfect assignment on square cost matrices.

/// Shortest-augmenting-path Hungarian method, O(n³).
///
/// Returns the optimal cost, the assignment (`row -> col`) and dual
/// potentials satisfying `cost[i][j] >= u[i] + v[j]` with equality on the
/// assignment.
fn solve(cost: &[Vec<f64>]) -> (f64, Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new(), Vec::new(), Vec::new());
    }
    // 1-based arrays; index 0 is the virtual source row/column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total, assignment, u[1..].to_vec(), v[1..].to_vec())
}

fn submatrix(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect()
}

/// Optimal total cost of the assignment problem.
pub fn hungarian_cost(cost: &[Vec<f64>]) -> f64 {
    solve(cost).0
}

/// Permutation `row -> col` minimizing total cost. Among optimal
/// permutations, returns the lexicographically smallest.
///
/// # Panics
/// If `cost` is not square or has non-finite entries.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    assert!(cost.iter().flatten().all(|c| c.is_finite()), "cost entries must be finite");
    let scale = cost.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale * (n.max(1) as f64);

    let (_, mut current, mut u, mut v) = solve(cost);
    let mut result = Vec::with_capacity(n);
    let mut free_cols: Vec<usize> = (0..n).collect();

    // Fix rows in order, each to the smallest column that still admits an
    // optimal completion. A pair can only appear in an optimal assignment if
    // its reduced cost under the current optimal duals is zero.
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let local_row = 0;
        let chosen_pos = current[local_row];
        let chosen_col = free_cols[chosen_pos];
        let reduced_opt: f64 = current
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[row + i][free_cols[j]])
            .sum();
        let mut pick = (chosen_pos, None);
        for (pos, &col) in free_cols.iter().enumerate() {
            if col >= chosen_col {
                break;
            }
            let slack = cost[row][col] - u[local_row] - v[pos];
            if slack.abs() > tol {
                continue;
            }
            let remaining: Vec<usize> = free_cols.iter().copied().filter(|&c| c != col).collect();
            let sub = submatrix(cost, &rest_rows, &remaining);
            let solved = solve(&sub);
            if cost[row][col] + solved.0 <= reduced_opt + tol {
                pick = (pos, Some(solved));
                break;
            }
        }
        let (pos, solved) = pick;
        result.push(free_cols[pos]);
        free_cols.remove(pos);
        match solved {
            Some((_, assign, su, sv)) => {
                current = assign;
                u = su;
                v = sv;
            }
            None => {
                // Keep the current optimum restricted to the remaining rows.
                let removed = pos;
                current = current[1..]
                    .iter()
                    .map(|&j| if j > removed { j - 1 } else { j })
                    .collect();
                u = u[1..].to_vec();
                v.remove(removed);
            }
        }
    }
    result
}
