//! Earth mover's distance between two normalized 2-D mass distributions,
//! solved exactly as a transportation problem by successive shortest
//! augmenting paths with node potentials (so every Dijkstra pass runs on
//! nonnegative reduced costs). Ground distance is Euclidean between pixel
//! centers.

use crate::error::{Error, Result};
use crate::image::SaliencyMap;

/// Largest grid the exact solver accepts per side.
pub const EXACT_GRID_LIMIT: usize = 16;

/// Whether oversized grids are rejected or mean-pooled first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmdMode {
    /// Solve on the full grid; error if a side exceeds [`EXACT_GRID_LIMIT`].
    Exact,
    /// Mean-pool both maps down to at most the limit, then solve exactly on
    /// the coarse grid (distances in coarse-pixel units).
    Downsampled,
}

/// Minimum-cost transport between the two maps' normalized masses.
pub fn emd(a: &SaliencyMap, b: &SaliencyMap, mode: EmdMode) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::dim(format!(
            "emd: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let (h, w) = (a.height(), a.width());
    match mode {
        EmdMode::Exact => {
            if h > EXACT_GRID_LIMIT || w > EXACT_GRID_LIMIT {
                return Err(Error::GridTooLarge {
                    height: h,
                    width: w,
                    limit: EXACT_GRID_LIMIT,
                });
            }
            let ma = normalize(a.data())?;
            let mb = normalize(b.data())?;
            Ok(solve_transport(&ma, &mb, w))
        }
        EmdMode::Downsampled => {
            let k = pool_factor(h, w);
            let (pa, _, pw) = block_mean_pool(a, k);
            let (pb, _, _) = block_mean_pool(b, k);
            let ma = normalize(&pa)?;
            let mb = normalize(&pb)?;
            Ok(solve_transport(&ma, &mb, pw))
        }
    }
}

fn normalize(data: &[f64]) -> Result<Vec<f64>> {
    if data.iter().any(|&v| v < 0.0) {
        return Err(Error::UndefinedMetric {
            metric: "emd",
            reason: "negative values are not a mass distribution".to_string(),
        });
    }
    let total: f64 = data.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "emd",
            reason: "zero-mass map cannot be normalized".to_string(),
        });
    }
    Ok(data.iter().map(|&v| v / total).collect())
}

fn pool_factor(h: usize, w: usize) -> usize {
    h.div_ceil(EXACT_GRID_LIMIT)
        .max(w.div_ceil(EXACT_GRID_LIMIT))
        .max(1)
}

/// Mean over each k x k block (partial blocks at the far edges average over
/// only their covered pixels).
fn block_mean_pool(m: &SaliencyMap, k: usize) -> (Vec<f64>, usize, usize) {
    if k == 1 {
        return (m.data().to_vec(), m.height(), m.width());
    }
    let th = m.height().div_ceil(k);
    let tw = m.width().div_ceil(k);
    let mut out = vec![0.0; th * tw];
    for ty in 0..th {
        for tx in 0..tw {
            let y_end = ((ty + 1) * k).min(m.height());
            let x_end = ((tx + 1) * k).min(m.width());
            let mut acc = 0.0;
            let mut count = 0usize;
            for y in ty * k..y_end {
                for x in tx * k..x_end {
                    acc += m.get(y, x);
                    count += 1;
                }
            }
            out[ty * tw + tx] = acc / count as f64;
        }
    }
    (out, th, tw)
}

const FLOW_DUST: f64 = 1e-15;
const SUPPLY_STOP: f64 = 1e-12;

/// Exact transportation solve between two unit-mass grids of identical dims.
fn solve_transport(a: &[f64], b: &[f64], w: usize) -> f64 {
    let sources: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let (ns, nt) = (sources.len(), sinks.len());
    let pos = |idx: usize| ((idx / w) as f64, (idx % w) as f64);
    let cost = |si: usize, tj: usize| -> f64 {
        let (ya, xa) = pos(sources[si]);
        let (yb, xb) = pos(sinks[tj]);
        ((ya - yb) * (ya - yb) + (xa - xb) * (xa - xb)).sqrt()
    };

    let mut rem_supply: Vec<f64> = sources.iter().map(|&i| a[i]).collect();
    let mut rem_demand: Vec<f64> = sinks.iter().map(|&j| b[j]).collect();
    let mut flow = vec![0.0f64; ns * nt];
    // duals: feasibility is cost(i,j) - u[i] - v[j] >= 0, with equality on
    // every edge carrying flow
    let mut u = vec![0.0f64; ns];
    let mut v = vec![0.0f64; nt];

    // node ids: 0..ns are sources, ns..ns+nt are sinks
    let nn = ns + nt;
    let max_rounds = ns * nt + 4 * nn + 64;

    for _ in 0..max_rounds {
        let remaining: f64 = rem_supply.iter().sum();
        if remaining <= SUPPLY_STOP {
            break;
        }
        // multi-source Dijkstra over reduced costs
        let mut dist = vec![f64::INFINITY; nn];
        let mut parent = vec![usize::MAX; nn];
        let mut done = vec![false; nn];
        for (si, &r) in rem_supply.iter().enumerate() {
            if r > FLOW_DUST {
                dist[si] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for n in 0..nn {
                if !done[n] && dist[n] < bd {
                    bd = dist[n];
                    best = n;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < ns {
                let si = best;
                for tj in 0..nt {
                    let rc = (cost(si, tj) - u[si] - v[tj]).max(0.0);
                    if dist[si] + rc < dist[ns + tj] {
                        dist[ns + tj] = dist[si] + rc;
                        parent[ns + tj] = si;
                    }
                }
            } else {
                let tj = best - ns;
                for si in 0..ns {
                    if flow[si * nt + tj] > FLOW_DUST {
                        // reverse edge; tight under complementary slackness
                        let rc = (u[si] + v[tj] - cost(si, tj)).max(0.0);
                        if dist[ns + tj] + rc < dist[si] {
                            dist[si] = dist[ns + tj] + rc;
                            parent[si] = ns + tj;
                        }
                    }
                }
            }
        }

        let mut target = usize::MAX;
        let mut td = f64::INFINITY;
        for (tj, &r) in rem_demand.iter().enumerate() {
            if r > FLOW_DUST && dist[ns + tj] < td {
                td = dist[ns + tj];
                target = tj;
            }
        }
        if target == usize::MAX {
            break;
        }

        // retune duals so path edges become tight
        for si in 0..ns {
            if dist[si].is_finite() {
                u[si] += td - dist[si].min(td);
            }
        }
        for tj in 0..nt {
            if dist[ns + tj].is_finite() {
                v[tj] -= td - dist[ns + tj].min(td);
            }
        }

        // walk the augmenting path back to its root source, collecting
        // (source, sink, is_forward) hops
        let mut path = Vec::new();
        let mut node = ns + target;
        while !(node < ns && parent[node] == usize::MAX) {
            let p = parent[node];
            if node >= ns {
                // forward edge p(source) -> node(sink)
                path.push((p, node - ns, true));
            } else {
                // reverse edge p(sink) -> node(source)
                path.push((node, p - ns, false));
            }
            node = p;
        }
        let start = node;
        let mut delta = rem_supply[start].min(rem_demand[target]);
        for &(si, tj, forward) in &path {
            if !forward {
                delta = delta.min(flow[si * nt + tj]);
            }
        }
        for &(si, tj, forward) in &path {
            let f = &mut flow[si * nt + tj];
            if forward {
                *f += delta;
            } else {
                *f -= delta;
                if *f < FLOW_DUST {
                    *f = 0.0;
                }
            }
        }
        rem_supply[start] -= delta;
        if rem_supply[start] < FLOW_DUST {
            rem_supply[start] = 0.0;
        }
        rem_demand[target] -= delta;
        if rem_demand[target] < FLOW_DUST {
            rem_demand[target] = 0.0;
        }
    }

    let mut total = 0.0;
    for si in 0..ns {
        for tj in 0..nt {
            let f = flow[si * nt + tj];
            if f > 0.0 {
                total += f * cost(si, tj);
            }
        }
    }
    total
}
