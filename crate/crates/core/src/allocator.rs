//! Importance-ordered subcarrier allocation.
//!
//! The receiver ranks subcarriers by estimated gain and feeds the ranking
//! back. The transmitter walks the selected maps from most to least
//! important and hands each a contiguous block of logical slots; logical
//! slot `l` is carried on the `l`-th strongest physical subcarrier. Inside a
//! block a map's symbols fill the block's slots row by row over the frame's
//! data symbols.

use num_complex::Complex64;

use crate::error::{param_err, Error, Result};
use crate::importance::ImportanceVector;
use crate::selector::{score_order, Selection};

/// Subcarrier indices by descending `|H[k]|`, ties by ascending `k`.
pub fn rank_subchannels(h: &[Complex64]) -> Vec<usize> {
    let mags: Vec<f64> = h.iter().map(|v| v.norm()).collect();
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    order
}

/// Slots of one map inside the frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapBlock {
    pub map_index: usize,
    pub first_slot: usize,
    pub width: usize,
    pub symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationMap {
    /// Logical slot `l` travels on physical subcarrier `perm[l]`.
    pub perm: Vec<usize>,
    /// `(map index, physical subcarrier)` for every assigned subcarrier.
    pub pairs: Vec<(usize, usize)>,
    pub csi_rank: Vec<usize>,
    pub blocks: Vec<MapBlock>,
    /// OFDM data symbols in the frame.
    pub data_symbols: usize,
}

impl AllocationMap {
    pub fn l_fft(&self) -> usize {
        self.perm.len()
    }

    pub fn payload_symbols(&self) -> usize {
        self.blocks.iter().map(|b| b.symbols).sum()
    }

    /// Same block layout carried on a different permutation, as assumed by
    /// a receiver without the CSI feedback.
    pub fn with_perm(&self, perm: Vec<usize>) -> Result<Self> {
        if !is_permutation(&perm) || perm.len() != self.perm.len() {
            return Err(param_err!("not a permutation of {} subcarriers", self.perm.len()));
        }
        let mut out = self.clone();
        out.pairs = pairs_for(&out.blocks, &perm);
        out.perm = perm;
        Ok(out)
    }

    /// Inverse permutation: physical subcarrier to logical slot.
    pub fn inverse(&self) -> Vec<usize> {
        invert(&self.perm)
    }

    /// `perm` as a dash-separated list.
    pub fn perm_string(&self) -> String {
        self.perm.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (l, &p) in perm.iter().enumerate() {
        inv[p] = l;
    }
    inv
}

fn pairs_for(blocks: &[MapBlock], perm: &[usize]) -> Vec<(usize, usize)> {
    blocks
        .iter()
        .flat_map(|b| (b.first_slot..b.first_slot + b.width).map(move |l| (b.map_index, perm[l])))
        .collect()
}

/// Subcarriers a block of `symbols` needs over `data_symbols` rows.
fn block_width(symbols: usize, data_symbols: usize) -> usize {
    symbols.div_ceil(data_symbols)
}

/// Fewest data symbols per frame that fit every payload as a block.
pub fn min_data_symbols(symbols: &[usize], l_fft: usize) -> Result<usize> {
    let total: usize = symbols.iter().sum();
    if total == 0 {
        return Ok(0);
    }
    let nonzero = symbols.iter().filter(|&&s| s > 0).count();
    if nonzero > l_fft {
        return Err(Error::Config(format!("{nonzero} payloads cannot share {l_fft} subcarriers")));
    }
    let mut rows = total.div_ceil(l_fft).max(1);
    while symbols.iter().map(|&s| block_width(s, rows)).sum::<usize>() > l_fft {
        rows += 1;
    }
    Ok(rows)
}

/// Assigns the selected maps to subcarrier blocks.
///
/// `symbols_per_map` is indexed by map index. Maps are placed in descending
/// score order (ties by ascending index), so higher-scoring maps always sit
/// on subcarriers at least as strong as those of lower-scoring maps.
pub fn allocate(
    selection: &Selection,
    iv: &ImportanceVector,
    csi_rank: &[usize],
    symbols_per_map: &[usize],
    data_symbols: usize,
) -> Result<AllocationMap> {
    if selection.is_empty() {
        return Err(param_err!("nothing selected to allocate"));
    }
    if !is_permutation(csi_rank) || csi_rank.is_empty() {
        return Err(param_err!("CSI ranking must be a permutation of the subcarriers"));
    }
    if symbols_per_map.len() != iv.n_maps() {
        return Err(param_err!(
            "{} symbol counts for {} maps",
            symbols_per_map.len(),
            iv.n_maps()
        ));
    }
    if let Some(&bad) = selection.indices.iter().find(|&&i| i >= iv.n_maps()) {
        return Err(param_err!("selected map {bad} does not exist"));
    }
    let l_fft = csi_rank.len();
    let selected: Vec<f64> = selection.indices.iter().map(|&i| iv.scores[i]).collect();
    let order: Vec<usize> = score_order(&selected)
        .into_iter()
        .map(|k| selection.indices[k])
        .collect();

    let needed: usize = order.iter().map(|&i| symbols_per_map[i]).sum();
    if data_symbols == 0 && needed > 0 {
        return Err(Error::Config("frame has no data symbols".into()));
    }
    let mut blocks = Vec::with_capacity(order.len());
    let mut next = 0;
    for &map_index in &order {
        let symbols = symbols_per_map[map_index];
        let width = if symbols == 0 { 0 } else { block_width(symbols, data_symbols) };
        blocks.push(MapBlock {
            map_index,
            first_slot: next,
            width,
            symbols,
        });
        next += width;
    }
    if next > l_fft {
        return Err(Error::Config(format!(
            "payload needs {next} subcarriers over {data_symbols} symbols, frame has {l_fft}"
        )));
    }
    let perm = csi_rank.to_vec();
    Ok(AllocationMap {
        pairs: pairs_for(&blocks, &perm),
        perm,
        csi_rank: csi_rank.to_vec(),
        blocks,
        data_symbols,
    })
}

/// Writes each block's payload into a physical grid of `data_symbols` rows.
/// Resource elements outside every block hold `filler(row, slot)`.
pub fn place<T: Copy>(
    alloc: &AllocationMap,
    payloads: &[Vec<T>],
    mut filler: impl FnMut(usize, usize) -> T,
) -> Result<Vec<Vec<T>>> {
    if payloads.len() != alloc.blocks.len() {
        return Err(param_err!("{} payloads for {} blocks", payloads.len(), alloc.blocks.len()));
    }
    let l_fft = alloc.l_fft();
    let mut logical: Vec<Vec<Option<T>>> = vec![vec![None; l_fft]; alloc.data_symbols];
    for (block, payload) in alloc.blocks.iter().zip(payloads) {
        if payload.len() != block.symbols {
            return Err(param_err!(
                "map {} has {} symbols, block holds {}",
                block.map_index,
                payload.len(),
                block.symbols
            ));
        }
        for (t, &s) in payload.iter().enumerate() {
            logical[t / block.width][block.first_slot + t % block.width] = Some(s);
        }
    }
    let mut grid = Vec::with_capacity(alloc.data_symbols);
    for (row, cells) in logical.into_iter().enumerate() {
        let mut physical: Vec<Option<T>> = vec![None; l_fft];
        for (slot, cell) in cells.into_iter().enumerate() {
            physical[alloc.perm[slot]] = Some(cell.unwrap_or_else(|| filler(row, slot)));
        }
        grid.push(physical.into_iter().map(Option::unwrap).collect());
    }
    Ok(grid)
}

/// Reads every block's payload back out of a physical grid, in block order.
pub fn deallocate<T: Copy>(grid: &[Vec<T>], alloc: &AllocationMap) -> Result<Vec<Vec<T>>> {
    let l_fft = alloc.l_fft();
    if grid.len() != alloc.data_symbols || grid.iter().any(|row| row.len() != l_fft) {
        return Err(param_err!(
            "grid is not {}x{l_fft} as the allocation expects",
            alloc.data_symbols
        ));
    }
    Ok(alloc
        .blocks
        .iter()
        .map(|b| {
            (0..b.symbols)
                .map(|t| grid[t / b.width][alloc.perm[b.first_slot + t % b.width]])
                .collect()
        })
        .collect())
}

/// `(data symbol row, physical subcarrier)` of every payload symbol, block by block.
pub fn block_positions(alloc: &AllocationMap) -> Vec<Vec<(usize, usize)>> {
    alloc
        .blocks
        .iter()
        .map(|b| {
            (0..b.symbols)
                .map(|t| (t / b.width, alloc.perm[b.first_slot + t % b.width]))
                .collect()
        })
        .collect()
}

/// Fraction of logical slots two permutations route differently.
pub fn scrambling_fraction(a: &[usize], b: &[usize]) -> f64 {
    let differing = a.iter().zip(b).filter(|(x, y)| x != y).count();
    differing as f64 / a.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn iv(scores: &[f64]) -> ImportanceVector {
        ImportanceVector::from_raw(scores.to_vec(), scores.iter().sum(), 0).unwrap()
    }

    fn select_all(n: usize, scores: &[f64]) -> Selection {
        Selection {
            indices: score_order(&scores[..n]),
            residual: 0.0,
            epsilon: 0.0,
        }
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_subchannels(&[c(1.0); 4]), vec![0, 1, 2, 3]);
        assert_eq!(rank_subchannels(&[c(0.1), c(0.9), c(0.5)]), vec![1, 2, 0]);
    }

    #[test]
    fn two_by_two_follows_strength() {
        let v = iv(&[0.9, 0.1]);
        let rank = rank_subchannels(&[c(0.2), c(0.8)]);
        let a = allocate(&select_all(2, &v.scores), &v, &rank, &[1, 1], 1).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn equal_scores_keep_index_order() {
        let v = iv(&[0.25; 4]);
        let rank = vec![3, 1, 0, 2];
        let a = allocate(&select_all(4, &v.scores), &v, &rank, &[1; 4], 1).unwrap();
        let maps: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
        assert_eq!(maps, vec![0, 1, 2, 3]);
        assert_eq!(a.pairs.iter().map(|p| p.1).collect::<Vec<_>>(), rank);
    }

    #[test]
    fn capacity_is_enforced() {
        let v = iv(&[0.5, 0.5]);
        let rank: Vec<usize> = (0..4).collect();
        let sel = select_all(2, &v.scores);
        assert!(matches!(allocate(&sel, &v, &rank, &[5, 5], 2), Err(Error::Config(_))));
        assert!(allocate(&sel, &v, &rank, &[4, 4], 2).is_ok());
        let empty = Selection { indices: vec![], residual: 1.0, epsilon: 2.0 };
        assert!(matches!(allocate(&empty, &v, &rank, &[4, 4], 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn minimal_rows() {
        assert_eq!(min_data_symbols(&[128; 10], 64).unwrap(), 22);
        assert_eq!(min_data_symbols(&[3, 3], 4).unwrap(), 2);
        assert_eq!(min_data_symbols(&[], 4).unwrap(), 0);
        assert!(min_data_symbols(&[1; 5], 4).is_err());
    }

    #[test]
    fn identity_perm_is_pass_through() {
        let v = iv(&[0.6, 0.4]);
        let rank: Vec<usize> = (0..4).collect();
        let a = allocate(&select_all(2, &v.scores), &v, &rank, &[3, 2], 2).unwrap();
        let grid = place(&a, &[vec![1, 2, 3], vec![4, 5]], |_, _| 0).unwrap();
        assert_eq!(grid, vec![vec![1, 2, 4, 0], vec![3, 0, 5, 0]]);
        assert_eq!(deallocate(&grid, &a).unwrap(), vec![vec![1, 2, 3], vec![4, 5]]);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let v = iv(&[1.0]);
        let a = allocate(&select_all(1, &v.scores), &v, &[0, 1], &[2], 1).unwrap();
        assert!(deallocate(&[vec![0u8; 3]], &a).is_err());
        assert!(place(&a, &[vec![1u8]], |_, _| 0).is_err());
        assert!(a.with_perm(vec![0, 0]).is_err());
    }

    #[test]
    fn perm_string_is_dash_separated() {
        let v = iv(&[1.0]);
        let a = allocate(&select_all(1, &v.scores), &v, &[2, 0, 1], &[1], 1).unwrap();
        assert_eq!(a.perm_string(), "2-0-1");
        assert_eq!(a.inverse(), vec![1, 2, 0]);
    }
}
