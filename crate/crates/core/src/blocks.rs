//! Block-diagonal matrices over Abelian symmetry sectors and their truncated
//! factorization.
//!
//! Each sector block is factorized independently to a per-sector rank
//! request `χ'_s`, after which the χ largest singular values over all
//! sectors are post-selected. With the deterministic path every block is
//! fully decomposed, so the result is the optimal rank-χ truncation of the
//! whole matrix. The randomized path only sees `χ'_s` values per block; a
//! sector whose whole request survives post-selection may be hiding more
//! large values, so its request is doubled and the block redone until every
//! sector either has a dropped candidate or is exhausted.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorize::{rsvd, tsvd, FactorizeError, Method, TruncatedFactorization};
use crate::scalar::Field;
use crate::seed;

/// Symmetry sector label (parity: 0 even, 1 odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SectorId(pub u8);

impl SectorId {
    pub const EVEN: SectorId = SectorId(0);
    pub const ODD: SectorId = SectorId(1);
}

impl std::fmt::Display for SectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            0 => write!(f, "even"),
            1 => write!(f, "odd"),
            c => write!(f, "q{c}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("invalid block structure: {0}")]
    Structure(String),
    #[error("sector {sector}: {source}")]
    Sector {
        sector: SectorId,
        #[source]
        source: FactorizeError,
    },
}

/// Sector-labeled block-diagonal matrix. Blocks may be empty.
#[derive(Debug, Clone)]
pub struct BlockDiagMatrix<T> {
    sectors: Vec<(SectorId, Array2<T>)>,
}

impl<T: Field> BlockDiagMatrix<T> {
    pub fn new(sectors: Vec<(SectorId, Array2<T>)>) -> Result<Self, BlockError> {
        if sectors.is_empty() {
            return Err(BlockError::Structure("at least one sector is required".into()));
        }
        for (i, (id, _)) in sectors.iter().enumerate() {
            if sectors[..i].iter().any(|(other, _)| other == id) {
                return Err(BlockError::Structure(format!("duplicate sector {id}")));
            }
        }
        Ok(Self { sectors })
    }

    pub fn sectors(&self) -> &[(SectorId, Array2<T>)] {
        &self.sectors
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.sectors.iter().map(|(_, b)| b.nrows()).sum()
    }

    pub fn cols(&self) -> usize {
        self.sectors.iter().map(|(_, b)| b.ncols()).sum()
    }

    /// Dense embedding with blocks placed along the diagonal in list order.
    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows(), self.cols()));
        let (mut r, mut c) = (0, 0);
        for (_, b) in &self.sectors {
            out.slice_mut(s![r..r + b.nrows(), c..c + b.ncols()]).assign(b);
            r += b.nrows();
            c += b.ncols();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorRankKind {
    /// `χ'_s = ⌈χ/N⌉ + c`.
    PerSectorEstimate,
    /// `χ'_s = χ`.
    Maximal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorRankPolicy {
    pub kind: SectorRankKind,
    pub chi: usize,
    pub slack: usize,
}

impl SectorRankPolicy {
    /// Per-sector estimate with the default slack `max(2, ⌈0.05·χ/N⌉)`.
    pub fn estimate(chi: usize, sectors: usize) -> Self {
        Self {
            kind: SectorRankKind::PerSectorEstimate,
            chi,
            slack: default_slack(chi, sectors),
        }
    }

    pub fn maximal(chi: usize) -> Self {
        Self {
            kind: SectorRankKind::Maximal,
            chi,
            slack: 0,
        }
    }
}

pub fn default_slack(chi: usize, sectors: usize) -> usize {
    let per = chi as f64 / sectors.max(1) as f64;
    ((0.05 * per).ceil() as usize).max(2)
}

/// Per-sector rank requests, each clipped to the block's maximal rank.
pub fn sector_request(policy: &SectorRankPolicy, sectors: usize, max_ranks: &[usize]) -> Vec<usize> {
    let n = sectors.max(1);
    let base = match policy.kind {
        SectorRankKind::PerSectorEstimate => policy.chi.div_ceil(n) + policy.slack,
        SectorRankKind::Maximal => policy.chi,
    };
    max_ranks.iter().map(|&m| base.min(m)).collect()
}

/// One sector's share of a [`BlockFactorization`].
#[derive(Debug, Clone)]
pub struct SectorFactor<T> {
    pub sector: SectorId,
    /// Truncated to the post-selected rank `χ_s`.
    pub factor: TruncatedFactorization<T>,
    /// Every singular value the sector produced before post-selection.
    pub candidates: Vec<f64>,
    /// Final per-sector request `χ'_s`.
    pub requested: usize,
}

#[derive(Debug, Clone)]
pub struct BlockFactorization<T> {
    pub sectors: Vec<SectorFactor<T>>,
}

impl<T: Field> BlockFactorization<T> {
    pub fn total_rank(&self) -> usize {
        self.sectors.iter().map(|s| s.factor.rank()).sum()
    }

    /// Retained values over all sectors, descending.
    pub fn retained_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .sectors
            .iter()
            .flat_map(|s| s.factor.sigma.iter().copied())
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn ranks(&self) -> Vec<(SectorId, usize)> {
        self.sectors.iter().map(|s| (s.sector, s.factor.rank())).collect()
    }

    pub fn discarded_weight(&self) -> f64 {
        self.sectors.iter().map(|s| s.factor.discarded.value()).sum()
    }
}

fn factorize_block<T: Field>(
    block: &Array2<T>,
    request: usize,
    method: &Method,
    seed: u64,
) -> Result<TruncatedFactorization<T>, FactorizeError> {
    let max_rank = block.nrows().min(block.ncols());
    if max_rank == 0 || request == 0 {
        return Ok(TruncatedFactorization::empty(block.nrows(), block.ncols()));
    }
    match method {
        Method::Tsvd => tsvd(block.view(), request),
        Method::Rsvd(settings) => {
            let params = settings.params_for(request, seed);
            if max_rank < settings.min_dim.max(2) || params.oversample >= max_rank {
                tsvd(block.view(), request)
            } else {
                rsvd(block.view(), &params)
            }
        }
    }
}

/// Global post-selection: per-sector counts of the `chi` largest values.
///
/// Ties at the boundary prefer the smaller sector label, then the smaller
/// in-sector index.
pub fn post_select(candidates: &[(SectorId, &[f64])], chi: usize) -> Vec<usize> {
    let mut all: Vec<(f64, SectorId, usize, usize)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(slot, (id, vals))| vals.iter().enumerate().map(move |(k, &v)| (v, *id, k, slot)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut counts = vec![0; candidates.len()];
    for &(_, _, _, slot) in all.iter().take(chi) {
        counts[slot] += 1;
    }
    counts
}

/// Factorize every block to its request and keep the globally largest χ values.
pub fn block_factorize<T: Field>(
    a: &BlockDiagMatrix<T>,
    chi: usize,
    policy: &SectorRankPolicy,
    method: &Method,
) -> Result<BlockFactorization<T>, BlockError> {
    block_factorize_with(a, chi, policy, method, None)
}

/// [`block_factorize`] with optional per-sector estimates (e.g. the ranks a
/// bond had after its previous update) replacing `⌈χ/N⌉` in the
/// per-sector-estimate policy.
pub fn block_factorize_with<T: Field>(
    a: &BlockDiagMatrix<T>,
    chi: usize,
    policy: &SectorRankPolicy,
    method: &Method,
    estimates: Option<&[usize]>,
) -> Result<BlockFactorization<T>, BlockError> {
    if chi == 0 {
        return Err(BlockError::Structure("χ must be at least 1".into()));
    }
    let blocks = a.sectors();
    let max_ranks: Vec<usize> = blocks.iter().map(|(_, b)| b.nrows().min(b.ncols())).collect();
    let n_active = max_ranks.iter().filter(|&&m| m > 0).count().max(1);
    let mut requests = sector_request(policy, n_active, &max_ranks);
    if let (SectorRankKind::PerSectorEstimate, Some(est)) = (policy.kind, estimates) {
        for (r, (&e, &m)) in requests.iter_mut().zip(est.iter().zip(&max_ranks)) {
            *r = (e + policy.slack).min(m).min(chi + policy.slack);
        }
    }
    if matches!(method, Method::Tsvd) {
        // The full SVD computes every value anyway; requesting fewer could
        // only lose optimality.
        for (r, &m) in requests.iter_mut().zip(&max_ranks) {
            *r = chi.min(m);
        }
    }
    let base_seed = match method {
        Method::Rsvd(s) => s.seed,
        Method::Tsvd => 0,
    };
    let run = |i: usize, request: usize, attempt: u64| -> Result<TruncatedFactorization<T>, BlockError> {
        let (id, block) = &blocks[i];
        let seed = seed::derive(base_seed, (i as u64) << 8 | attempt);
        factorize_block(block, request, method, seed).map_err(|source| BlockError::Sector { sector: *id, source })
    };

    let mut factors = Vec::with_capacity(blocks.len());
    for (i, &r) in requests.iter().enumerate() {
        factors.push(run(i, r, 0)?);
    }

    let mut attempt = 0u64;
    let counts = loop {
        let cands: Vec<(SectorId, &[f64])> = blocks
            .iter()
            .zip(&factors)
            .map(|((id, _), f)| (*id, f.sigma.as_slice().expect("contiguous")))
            .collect();
        let counts = post_select(&cands, chi);
        if matches!(method, Method::Tsvd) {
            break counts;
        }
        // A sector is saturated when every value it returned survived, its
        // request was honoured in full and the block could still give more.
        let mut grew = false;
        for i in 0..blocks.len() {
            let f = &factors[i];
            let saturated =
                counts[i] == requests[i] && f.rank() == requests[i] && requests[i] < max_ranks[i] && requests[i] < chi;
            if saturated {
                requests[i] = (requests[i] * 2).min(max_ranks[i]).min(chi);
                attempt += 1;
                factors[i] = run(i, requests[i], attempt)?;
                grew = true;
            }
        }
        if !grew {
            break counts;
        }
    };

    let sectors = blocks
        .iter()
        .zip(factors)
        .zip(counts)
        .zip(requests)
        .map(|((((id, _), mut f), keep), requested)| {
            let candidates = f.sigma.to_vec();
            f.truncate(keep);
            SectorFactor {
                sector: *id,
                factor: f,
                candidates,
                requested,
            }
        })
        .collect();
    Ok(BlockFactorization { sectors })
}
