use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::CscMatrix;

/// Fill-reducing symmetric permutation computed on the 3×3 block graph.
///
/// Dense block rows (the global motion unknowns couple to every point) are
/// moved to the end; the rest is ordered by minimum degree on an explicit
/// elimination graph, lowest block index first among equal degrees.
/// Returns `perm` with `perm[new] = old` over scalar indices.
pub fn block_minimum_degree(a: &CscMatrix, blocks: usize) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); blocks];
    for c in 0..a.n {
        for (r, v) in a.column(c) {
            let (br, bc) = (r / 3, c / 3);
            if br != bc && v != 0.0 {
                adj[br].push(bc);
                adj[bc].push(br);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let dense_limit = 16.max(10 * libm::sqrt(blocks as f64) as usize);
    let dense: Vec<bool> = adj.iter().map(|s| s.len() > dense_limit).collect();
    for (b, list) in adj.iter_mut().enumerate() {
        if dense[b] {
            list.clear();
        } else {
            list.retain(|&o| !dense[o]);
        }
    }

    let mut queue: BTreeSet<(usize, usize)> = (0..blocks)
        .filter(|&b| !dense[b])
        .map(|b| (adj[b].len(), b))
        .collect();
    let mut mark = vec![0usize; blocks];
    let mut stamp = 0usize;
    let mut order = Vec::with_capacity(blocks);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs = core::mem::take(&mut adj[v]);
        // neighbors of v become a clique
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            let list = &mut adj[u];
            list.retain(|&w| w != v);
            stamp += 1;
            mark[u] = stamp;
            for &w in list.iter() {
                mark[w] = stamp;
            }
            for &w in &nbrs {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    list.push(w);
                }
            }
            queue.insert((list.len(), u));
        }
    }
    order.extend((0..blocks).filter(|&b| dense[b]));

    order.iter().flat_map(|&b| [3 * b, 3 * b + 1, 3 * b + 2]).collect()
}
