//! Selmer structures as finite-dimensional linear algebra over `F_l`.
//!
//! A structure is a global space `F_l^g` with localization maps into local
//! symplectic spaces, each carrying an unramified subspace and one condition
//! subspace per extension tag. The base field's conditions use [`BASE_TAG`].

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat, Subspace};

pub const BASE_TAG: &str = "K";
pub const SUPPORTED_ELLS: [u8; 3] = [2, 3, 5];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelmerError {
    #[error("no condition subspace for tag {tag:?} at place {place}")]
    MissingTag { tag: String, place: String },
    #[error("unknown place index {0}")]
    InvalidPlace(usize),
    #[error("inconsistent shape: {0}")]
    Shape(String),
    #[error("invalid structure: {0}")]
    Invalid(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("rank bound violated: {0}")]
    RankBound(String),
}

/// Local role of a place. `P0`, `P1`, `P2` places have unramified subspace
/// of dimension 0, 1, 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaceShape {
    Generic,
    P0,
    P1,
    P2,
}

impl PlaceShape {
    fn required_dim(self) -> Option<usize> {
        match self {
            PlaceShape::Generic => None,
            PlaceShape::P0 => Some(0),
            PlaceShape::P1 => Some(2),
            PlaceShape::P2 => Some(4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSpace {
    pub place: String,
    pub dim: usize,
    pub shape: PlaceShape,
    pub pairing: Mat,
    pub ur: Subspace,
    pub conditions: BTreeMap<String, Subspace>,
    /// Tags whose condition is declared to equal `ur` here.
    pub good_unramified: BTreeSet<String>,
}

impl LocalSpace {
    pub fn condition(&self, tag: &str) -> Result<&Subspace, SelmerError> {
        self.conditions
            .get(tag)
            .ok_or_else(|| SelmerError::MissingTag { tag: tag.to_string(), place: self.place.clone() })
    }

    /// `{y : <x, y> = 0 for all x in s}`.
    pub fn annihilator(&self, s: &Subspace) -> Subspace {
        annihilator(&self.pairing, s)
    }

    pub fn is_isotropic(&self, s: &Subspace) -> bool {
        is_isotropic(&self.pairing, s)
    }
}

fn annihilator(pairing: &Mat, s: &Subspace) -> Subspace {
    if s.dim() == 0 {
        return Subspace::full(pairing.ell, pairing.cols);
    }
    let m = s.as_mat().mul(pairing);
    Subspace::span(pairing.ell, pairing.cols, m.kernel())
}

fn is_isotropic(pairing: &Mat, s: &Subspace) -> bool {
    annihilator(pairing, s).contains_space(s)
}

fn pair(pairing: &Mat, x: &[u8], y: &[u8]) -> u8 {
    let py = pairing.apply(y);
    let l = pairing.ell as u32;
    (x.iter().zip(&py).map(|(&a, &b)| a as u32 * b as u32).sum::<u32>() % l) as u8
}

/// A squarefree product of places, given by distinct place indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealTag {
    pub places: Vec<usize>,
}

impl IdealTag {
    pub fn new(mut places: Vec<usize>) -> Self {
        places.sort_unstable();
        places.dedup();
        IdealTag { places }
    }

    pub fn empty() -> Self {
        IdealTag::default()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.places.binary_search(&v).is_ok()
    }

    pub fn with(&self, v: usize) -> Self {
        let mut p = self.places.clone();
        p.push(v);
        IdealTag::new(p)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelmerStructure {
    pub ell: u8,
    pub global_dim: usize,
    pub places: Vec<LocalSpace>,
    pub loc_maps: Vec<Mat>,
    /// Whether the global duality axiom is declared for this structure.
    pub global_duality: bool,
    pub seed: Option<u64>,
}

impl SelmerStructure {
    /// Check dimensions, nondegeneracy and the isotropy of every condition.
    pub fn validate(&self) -> Result<(), SelmerError> {
        if !SUPPORTED_ELLS.contains(&self.ell) {
            return Err(SelmerError::Invalid(format!("unsupported ell {}", self.ell)));
        }
        if self.places.len() != self.loc_maps.len() {
            return Err(SelmerError::Shape("one localization map per place required".into()));
        }
        for (v, m) in self.places.iter().zip(&self.loc_maps) {
            let bad = |msg: String| Err(SelmerError::Invalid(format!("place {}: {msg}", v.place)));
            if m.ell != self.ell || m.cols != self.global_dim || m.nrows() != v.dim {
                return Err(SelmerError::Shape(format!("loc map at {} is not {}x{}", v.place, v.dim, self.global_dim)));
            }
            if v.pairing.nrows() != v.dim || v.pairing.cols != v.dim || v.pairing.rank() != v.dim {
                return bad("pairing degenerate or misshapen".into());
            }
            if let Some(d) = v.shape.required_dim() {
                if v.dim != d {
                    return bad(format!("shape {:?} needs dimension {d}", v.shape));
                }
            }
            let mut spaces = vec![("ur", &v.ur)];
            spaces.extend(v.conditions.iter().map(|(t, s)| (t.as_str(), s)));
            for (name, s) in spaces {
                if s.ambient != v.dim || s.ell != self.ell {
                    return bad(format!("{name} lives in the wrong space"));
                }
                if 2 * s.dim() != v.dim || !v.is_isotropic(s) {
                    return bad(format!("{name} is not maximal isotropic"));
                }
            }
            for t in &v.good_unramified {
                if v.condition(t)? != &v.ur {
                    return bad(format!("tag {t} declared unramified but differs from ur"));
                }
            }
        }
        Ok(())
    }

    fn check_ideal(&self, a: &IdealTag) -> Result<(), SelmerError> {
        match a.places.iter().find(|&&v| v >= self.places.len()) {
            Some(&v) => Err(SelmerError::InvalidPlace(v)),
            None => Ok(()),
        }
    }

    /// `{c : loc_v(c) in cond(v)}` for a per-place choice of conditions.
    fn kernel_with<F>(&self, mut cond: F) -> Result<Subspace, SelmerError>
    where
        F: FnMut(usize, &LocalSpace) -> Result<Subspace, SelmerError>,
    {
        let mut constraints = Mat::zero(self.ell, 0, self.global_dim);
        for (i, v) in self.places.iter().enumerate() {
            let c = cond(i, v)?;
            let ann = c.dot_complement();
            if ann.dim() > 0 {
                constraints = constraints.vstack(&ann.as_mat().mul(&self.loc_maps[i]));
            }
        }
        Ok(Subspace::span(self.ell, self.global_dim, constraints.kernel()))
    }

    /// Direct sum of the localization maps at the places of `a`.
    fn loc_at(&self, a: &IdealTag) -> Mat {
        let mut m = Mat::zero(self.ell, 0, self.global_dim);
        for &v in &a.places {
            m = m.vstack(&self.loc_maps[v]);
        }
        m
    }

    fn block_pairing(&self, a: &IdealTag) -> Mat {
        let n: usize = a.places.iter().map(|&v| self.places[v].dim).sum();
        let mut p = Mat::zero(self.ell, n, n);
        let mut off = 0;
        for &v in &a.places {
            let local = &self.places[v];
            for i in 0..local.dim {
                for j in 0..local.dim {
                    p.rows[off + i][off + j] = local.pairing.rows[i][j];
                }
            }
            off += local.dim;
        }
        p
    }

    fn block_space<F>(&self, a: &IdealTag, mut f: F) -> Result<Subspace, SelmerError>
    where
        F: FnMut(&LocalSpace) -> Result<Subspace, SelmerError>,
    {
        let n: usize = a.places.iter().map(|&v| self.places[v].dim).sum();
        let mut vecs = Vec::new();
        let mut off = 0;
        for &v in &a.places {
            let local = &self.places[v];
            for b in f(local)?.basis {
                let mut x = vec![0u8; n];
                x[off..off + local.dim].copy_from_slice(&b);
                vecs.push(x);
            }
            off += local.dim;
        }
        Ok(Subspace::span(self.ell, n, vecs))
    }
}

/// `Sel(L/K)` for extension tag `tag`.
pub fn selmer_kernel(s: &SelmerStructure, tag: &str) -> Result<Subspace, SelmerError> {
    s.kernel_with(|_, v| v.condition(tag).cloned())
}

/// Relaxed and strict Selmer groups at `a` for the base tag.
pub fn relaxed_strict(s: &SelmerStructure, a: &IdealTag) -> Result<(Subspace, Subspace), SelmerError> {
    relaxed_strict_for(s, a, BASE_TAG)
}

pub fn relaxed_strict_for(s: &SelmerStructure, a: &IdealTag, tag: &str) -> Result<(Subspace, Subspace), SelmerError> {
    s.check_ideal(a)?;
    let relaxed = s.kernel_with(|i, v| {
        if a.contains(i) {
            Ok(Subspace::full(s.ell, v.dim))
        } else {
            v.condition(tag).cloned()
        }
    })?;
    let strict = s.kernel_with(|i, v| {
        if a.contains(i) {
            Ok(Subspace::zero(s.ell, v.dim))
        } else {
            v.condition(tag).cloned()
        }
    })?;
    Ok((relaxed, strict))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualityReport {
    pub ideal: IdealTag,
    pub sel_dim: usize,
    pub relaxed_dim: usize,
    pub strict_dim: usize,
    pub half_local_dim: usize,
    pub relaxed_image_dim: usize,
    pub sel_image_dim: usize,
    pub self_dual_outside: bool,
    /// Images pair to zero against each other.
    pub orthogonal: bool,
    /// Each image is the full annihilator of the other.
    pub complements: bool,
    /// The relaxed image is maximal isotropic.
    pub lagrangian_image: bool,
    /// `None` unless the global duality axiom is declared.
    pub dimension_identity: Option<bool>,
    pub chain_holds: bool,
}

impl DualityReport {
    pub fn holds(&self) -> bool {
        self.self_dual_outside
            && self.orthogonal
            && self.complements
            && self.lagrangian_image
            && self.chain_holds
            && self.dimension_identity != Some(false)
    }
}

/// Compare the images of the relaxed and ordinary Selmer groups at `a`
/// under the sum of local pairings.
pub fn duality_defect(s: &SelmerStructure, a: &IdealTag) -> Result<DualityReport, SelmerError> {
    s.check_ideal(a)?;
    let sel = selmer_kernel(s, BASE_TAG)?;
    let (relaxed, strict) = relaxed_strict(s, a)?;
    let self_dual_outside = s.places.iter().enumerate().filter(|(i, _)| !a.contains(*i)).all(|(_, v)| {
        v.condition(BASE_TAG).map(|c| 2 * c.dim() == v.dim && v.is_isotropic(c)).unwrap_or(false)
    });
    let loc = s.loc_at(a);
    let pairing = s.block_pairing(a);
    let h = s.block_space(a, |v| v.condition(BASE_TAG).cloned())?;
    let w = relaxed.image(&loc);
    let u = sel.image(&loc);
    let orthogonal = w.basis.iter().all(|x| u.basis.iter().all(|y| pair(&pairing, x, y) == 0 && pair(&pairing, y, x) == 0));
    // annihilator of W inside H must be U; annihilator of U in V must be W + H
    let ann_w_in_h = annihilator(&pairing, &w).intersect(&h);
    let ann_u = annihilator(&pairing, &u);
    let complements = ann_w_in_h == u && ann_u == w.sum(&h);
    let half_local_dim: usize = a.places.iter().map(|&v| s.places[v].dim / 2).sum();
    let lagrangian_image = w.dim() == half_local_dim && is_isotropic(&pairing, &w);
    let dimension_identity = s.global_duality.then(|| relaxed.dim() - strict.dim() == half_local_dim);
    let chain_holds = sel.contains_space(&strict) && relaxed.contains_space(&sel);
    Ok(DualityReport {
        ideal: a.clone(),
        sel_dim: sel.dim(),
        relaxed_dim: relaxed.dim(),
        strict_dim: strict.dim(),
        half_local_dim,
        relaxed_image_dim: w.dim(),
        sel_image_dim: u.dim(),
        self_dual_outside,
        orthogonal,
        complements,
        lagrangian_image,
        dimension_identity,
        chain_holds,
    })
}

/// Per-place request for [`generate_dual_pair`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceSpec {
    pub dim: usize,
    pub shape: PlaceShape,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualShape {
    pub places: Vec<PlaceSpec>,
    /// Global classes that are locally trivial everywhere.
    pub kernel_dim: usize,
    /// Lower bound on the locally nontrivial part of `Sel`.
    pub forced_sel: usize,
}

impl DualShape {
    pub fn uniform(shapes: &[PlaceShape]) -> Self {
        DualShape {
            places: shapes
                .iter()
                .map(|&shape| PlaceSpec { dim: shape.required_dim().unwrap_or(2), shape })
                .collect(),
            ..Default::default()
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, ell: u8, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..ell)).collect()
}

/// A nondegenerate alternating form in a random basis.
fn random_symplectic(rng: &mut ChaCha8Rng, ell: u8, dim: usize) -> Mat {
    let mut j = Mat::zero(ell, dim, dim);
    for i in 0..dim / 2 {
        j.rows[2 * i][2 * i + 1] = 1;
        j.rows[2 * i + 1][2 * i] = ell - 1;
    }
    let c = random_invertible(rng, ell, dim);
    c.transpose().mul(&j).mul(&c)
}

fn random_invertible(rng: &mut ChaCha8Rng, ell: u8, n: usize) -> Mat {
    loop {
        let m = Mat::from_rows(ell, n, (0..n).map(|_| random_vec(rng, ell, n)).collect());
        if m.rank() == n {
            return m;
        }
    }
}

/// Extend the isotropic `start` to a random maximal isotropic subspace.
fn random_lagrangian(rng: &mut ChaCha8Rng, pairing: &Mat, start: Subspace) -> Subspace {
    let ell = pairing.ell;
    let mut l = start;
    while 2 * l.dim() < pairing.cols {
        let perp = annihilator(pairing, &l);
        let x = loop {
            let coeffs = random_vec(rng, ell, perp.dim());
            let x = perp.as_mat().transpose().apply(&coeffs);
            if !l.contains(&x) {
                break x;
            }
        };
        l = l.sum(&Subspace::span(ell, pairing.cols, vec![x]));
    }
    l
}

/// A maximal isotropic subspace meeting `avoid` trivially.
fn random_lagrangian_avoiding(rng: &mut ChaCha8Rng, pairing: &Mat, avoid: &Subspace) -> Result<Subspace, SelmerError> {
    for _ in 0..10_000 {
        let l = random_lagrangian(rng, pairing, Subspace::zero(pairing.ell, pairing.cols));
        if l.intersect(avoid).dim() == 0 {
            return Ok(l);
        }
    }
    Err(SelmerError::Shape("no transverse lagrangian found".into()))
}

/// Synthetic structure obeying global duality: the stacked localization map
/// has lagrangian image in the sum of the local spaces.
pub fn generate_dual_pair(ell: u8, shape: &DualShape, seed: u64) -> Result<SelmerStructure, SelmerError> {
    if !SUPPORTED_ELLS.contains(&ell) {
        return Err(SelmerError::Shape(format!("unsupported ell {ell}")));
    }
    for (i, p) in shape.places.iter().enumerate() {
        if p.dim % 2 != 0 {
            return Err(SelmerError::Shape(format!("place {i} has odd dimension {}", p.dim)));
        }
        if p.shape.required_dim().is_some_and(|d| d != p.dim) {
            return Err(SelmerError::Shape(format!("place {i}: shape {:?} with dimension {}", p.shape, p.dim)));
        }
    }
    let half: usize = shape.places.iter().map(|p| p.dim / 2).sum();
    if shape.forced_sel > half {
        return Err(SelmerError::Shape(format!("forced_sel {} exceeds {half}", shape.forced_sel)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut places = Vec::new();
    for (i, p) in shape.places.iter().enumerate() {
        let pairing = random_symplectic(&mut rng, ell, p.dim);
        let ur = random_lagrangian(&mut rng, &pairing, Subspace::zero(ell, p.dim));
        places.push(LocalSpace {
            place: format!("v{i}"),
            dim: p.dim,
            shape: p.shape,
            pairing,
            ur: ur.clone(),
            conditions: BTreeMap::from([(BASE_TAG.to_string(), ur)]),
            good_unramified: BTreeSet::from([BASE_TAG.to_string()]),
        });
    }
    let all = IdealTag::new((0..places.len()).collect());
    let skeleton = SelmerStructure {
        ell,
        global_dim: 0,
        places,
        loc_maps: Vec::new(),
        global_duality: true,
        seed: Some(seed),
    };
    let total = skeleton.block_pairing(&all);
    let h = skeleton.block_space(&all, |v| Ok(v.ur.clone()))?;
    let mut start = Subspace::zero(ell, 2 * half);
    while start.dim() < shape.forced_sel {
        let coeffs = random_vec(&mut rng, ell, h.dim());
        start = start.sum(&Subspace::span(ell, 2 * half, vec![h.as_mat().transpose().apply(&coeffs)]));
    }
    let lambda = random_lagrangian(&mut rng, &total, start);
    let g = half + shape.kernel_dim;
    // columns: lagrangian basis, then zeros for the locally trivial part
    let mut b = Mat::zero(ell, 2 * half, g);
    for (j, v) in lambda.basis.iter().enumerate() {
        for (i, &x) in v.iter().enumerate() {
            b.rows[i][j] = x;
        }
    }
    let stacked = b.mul(&random_invertible(&mut rng, ell, g));
    let mut loc_maps = Vec::new();
    let mut off = 0;
    for v in &skeleton.places {
        loc_maps.push(Mat { ell, cols: g, rows: stacked.rows[off..off + v.dim].to_vec() });
        off += v.dim;
    }
    let s = SelmerStructure { global_dim: g, loc_maps, ..skeleton };
    s.validate()?;
    Ok(s)
}

/// Add tag `tag` with conditions transverse to `ur` at the places in `t`
/// and equal to the base conditions elsewhere.
pub fn add_transverse_tag(s: &SelmerStructure, tag: &str, t: &IdealTag, seed: u64) -> Result<SelmerStructure, SelmerError> {
    s.check_ideal(t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = s.clone();
    for (i, v) in out.places.iter_mut().enumerate() {
        let c = if t.contains(i) {
            random_lagrangian_avoiding(&mut rng, &v.pairing, &v.ur)?
        } else {
            if v.good_unramified.contains(BASE_TAG) {
                v.good_unramified.insert(tag.to_string());
            }
            v.condition(BASE_TAG)?.clone()
        };
        v.conditions.insert(tag.to_string(), c);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCertificate {
    pub ideal: IdealTag,
    pub place: usize,
    pub dim_before: usize,
    pub dim_after: usize,
    pub image_dim: usize,
    /// `0 -> Sel_ap -> Sel_a -> H_ur -> 0` verified.
    pub exact: bool,
}

/// One step of the strict dimension drop at a place with one-dimensional
/// unramified subspace.
pub fn dimension_drop_step(s: &SelmerStructure, a: &IdealTag, p: usize) -> Result<DropCertificate, SelmerError> {
    s.check_ideal(&a.with(p))?;
    let v = &s.places[p];
    if a.contains(p) {
        return Err(SelmerError::NotApplicable(format!("{} already divides the ideal", v.place)));
    }
    if v.ur.dim() != 1 {
        return Err(SelmerError::NotApplicable(format!("{} has unramified dimension {}", v.place, v.ur.dim())));
    }
    if v.condition(BASE_TAG)? != &v.ur {
        return Err(SelmerError::NotApplicable(format!("base condition at {} is not unramified", v.place)));
    }
    let (_, strict_a) = relaxed_strict(s, a)?;
    let image = strict_a.image(&s.loc_maps[p]);
    if image.dim() == 0 {
        return Err(SelmerError::NotApplicable(format!("localization at {} vanishes on the strict group", v.place)));
    }
    let ap = a.with(p);
    let (_, strict_ap) = relaxed_strict(s, &ap)?;
    let kernel = strict_a.intersect(&Subspace::preimage(&s.loc_maps[p], &Subspace::zero(s.ell, v.dim)));
    let exact = image == v.ur && kernel == strict_ap && strict_ap.dim() + 1 == strict_a.dim();
    Ok(DropCertificate {
        ideal: a.clone(),
        place: p,
        dim_before: strict_a.dim(),
        dim_after: strict_ap.dim(),
        image_dim: image.dim(),
        exact,
    })
}

/// Greedily pick places from `candidates` at which the strict group drops,
/// stopping once it vanishes.
pub fn choose_drop_chain(s: &SelmerStructure, candidates: &[usize]) -> Result<(IdealTag, Vec<DropCertificate>), SelmerError> {
    let mut a = IdealTag::empty();
    let mut certs = Vec::new();
    for &p in candidates {
        if certs.last().is_some_and(|c: &DropCertificate| c.dim_after == 0) {
            break;
        }
        match dimension_drop_step(s, &a, p) {
            Ok(c) => {
                a = a.with(p);
                certs.push(c);
            }
            Err(SelmerError::NotApplicable(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok((a, certs))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tag: String,
    pub t_places: Vec<usize>,
    pub t0_places: Vec<usize>,
    pub r: usize,
    pub t: usize,
    pub steps: Vec<DropCertificate>,
    pub relative_dim: usize,
    /// Localizations of the relaxed group land in the unramified subspaces.
    pub containment: bool,
    pub matches_strict: bool,
    pub matches_direct_kernel: bool,
}

/// `dim Sel(L/K) = r - t` for a drop chain `T` and transverse conditions at `T`.
pub fn relative_dim_pipeline(s: &SelmerStructure, t: &[usize], t0: &[usize], tag: &str) -> Result<PipelineReport, SelmerError> {
    let pre = |m: String| Err(SelmerError::Precondition(m));
    let t_ideal = IdealTag::new(t.to_vec());
    let t0_ideal = IdealTag::new(t0.to_vec());
    s.check_ideal(&t_ideal)?;
    s.check_ideal(&t0_ideal)?;
    if t_ideal.places.len() != t.len() {
        return pre("T has repeated places".into());
    }
    if t_ideal.places.iter().any(|&v| t0_ideal.contains(v)) {
        return pre("T and T0 overlap".into());
    }
    for (i, v) in s.places.iter().enumerate() {
        let l = v.condition(tag)?;
        if t0_ideal.contains(i) {
            if v.dim != 0 {
                return pre(format!("{} in T0 has local dimension {}", v.place, v.dim));
            }
        } else if t_ideal.contains(i) {
            if l.intersect(&v.ur).dim() != 0 {
                return pre(format!("tag {tag} meets ur at {}", v.place));
            }
        } else if l != v.condition(BASE_TAG)? {
            return pre(format!("tag {tag} differs from the base condition at {}", v.place));
        }
    }
    let r = selmer_kernel(s, BASE_TAG)?.dim();
    let mut a = IdealTag::empty();
    let mut steps = Vec::new();
    for &p in t {
        let c = dimension_drop_step(s, &a, p).map_err(|e| SelmerError::Precondition(format!("drop at place {p}: {e}")))?;
        if !c.exact {
            return pre(format!("drop at place {p} is not exact"));
        }
        a = a.with(p);
        steps.push(c);
    }
    let (relaxed, strict) = relaxed_strict(s, &t_ideal)?;
    let ur_t = s.block_space(&t_ideal, |v| Ok(v.ur.clone()))?;
    let loc_t = s.loc_at(&t_ideal);
    let containment = ur_t.contains_space(&relaxed.image(&loc_t));
    if !containment {
        return pre("relaxed group does not localize into the unramified subspaces".into());
    }
    let l_t = s.block_space(&t_ideal, |v| v.condition(tag).cloned())?;
    let relative = relaxed.intersect(&Subspace::preimage(&loc_t, &l_t));
    let direct = selmer_kernel(s, tag)?;
    let report = PipelineReport {
        tag: tag.to_string(),
        t_places: t.to_vec(),
        t0_places: t0.to_vec(),
        r,
        t: t.len(),
        steps,
        relative_dim: relative.dim(),
        containment,
        matches_strict: relative == strict,
        matches_direct_kernel: relative == direct,
    };
    if !report.matches_strict || !report.matches_direct_kernel || report.relative_dim + t.len() != r {
        return Err(SelmerError::Invalid(format!(
            "relative group has dimension {} (strict {}, direct {}, r - t = {})",
            relative.dim(),
            strict.dim(),
            direct.dim(),
            r as i64 - t.len() as i64
        )));
    }
    Ok(report)
}

/// `rank_K <= rank_L <= rank_K + (l - 1) dim Sel(L/K)`.
pub fn check_rank_bound(rank_k: u64, rank_l: u64, ell: u64, sel_dim: u64) -> Result<(), SelmerError> {
    let upper = rank_k + (ell - 1) * sel_dim;
    if rank_l < rank_k || rank_l > upper {
        return Err(SelmerError::RankBound(format!("need {rank_k} <= {rank_l} <= {upper}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enumerate(ell: u8, n: usize) -> Vec<Vec<u8>> {
        let total = (ell as usize).pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|_| {
                        let d = (k % ell as usize) as u8;
                        k /= ell as usize;
                        d
                    })
                    .collect()
            })
            .collect()
    }

    /// Membership by enumerating all combinations of the basis.
    fn in_span(s: &Subspace, x: &[u8]) -> bool {
        s.elements().iter().any(|e| e == x)
    }

    fn brute_count<F: Fn(usize) -> Option<Subspace>>(s: &SelmerStructure, cond: F) -> usize {
        enumerate(s.ell, s.global_dim)
            .into_iter()
            .filter(|c| {
                s.places.iter().enumerate().all(|(i, _)| {
                    let y = s.loc_maps[i].apply(c);
                    match cond(i) {
                        Some(h) => in_span(&h, &y),
                        None => y.iter().all(|&x| x == 0),
                    }
                })
            })
            .count()
    }

    fn shape(dims: &[usize], kernel_dim: usize, forced: usize) -> DualShape {
        DualShape {
            places: dims
                .iter()
                .map(|&d| PlaceSpec {
                    dim: d,
                    shape: match d {
                        0 => PlaceShape::P0,
                        2 => PlaceShape::P1,
                        _ => PlaceShape::Generic,
                    },
                })
                .collect(),
            kernel_dim,
            forced_sel: forced,
        }
    }

    #[test]
    fn zero_places_sel_is_global() {
        let s = generate_dual_pair(2, &shape(&[], 3, 0), 1).unwrap();
        assert_eq!(selmer_kernel(&s, BASE_TAG).unwrap().dim(), 3);
        let s = generate_dual_pair(2, &shape(&[], 0, 0), 1).unwrap();
        assert_eq!(selmer_kernel(&s, BASE_TAG).unwrap().dim(), 0);
    }

    #[test]
    fn full_conditions_give_everything() {
        let mut s = generate_dual_pair(3, &shape(&[2, 4], 1, 0), 7).unwrap();
        for v in s.places.iter_mut() {
            v.conditions.insert("all".into(), Subspace::full(3, v.dim));
        }
        assert_eq!(selmer_kernel(&s, "all").unwrap().dim(), s.global_dim);
        assert!(matches!(selmer_kernel(&s, "nope"), Err(SelmerError::MissingTag { .. })));
    }

    #[test]
    fn kernel_matches_enumeration() {
        for seed in 0..40 {
            for ell in [2u8, 3] {
                let s = generate_dual_pair(ell, &shape(&[2, 2, 0, 2], 1, (seed % 3) as usize), seed).unwrap();
                let sel = selmer_kernel(&s, BASE_TAG).unwrap();
                let brute = brute_count(&s, |i| Some(s.places[i].ur.clone()));
                assert_eq!((ell as usize).pow(sel.dim() as u32), brute);
            }
        }
    }

    #[test]
    fn relaxed_strict_chain_and_duality() {
        for seed in 0..60 {
            let s = generate_dual_pair(2, &shape(&[2, 2, 4], 1, 1), seed).unwrap();
            for mask in 0..8usize {
                let a = IdealTag::new((0..3).filter(|i| mask >> i & 1 == 1).collect());
                let (relaxed, strict) = relaxed_strict(&s, &a).unwrap();
                let r = brute_count(&s, |i| (!a.contains(i)).then(|| s.places[i].ur.clone()));
                let relaxed_brute = enumerate(2, s.global_dim)
                    .into_iter()
                    .filter(|c| (0..3).filter(|i| !a.contains(*i)).all(|i| in_span(&s.places[i].ur, &s.loc_maps[i].apply(c))))
                    .count();
                assert_eq!(1usize << relaxed.dim(), relaxed_brute);
                assert_eq!(1usize << strict.dim(), r);
                let rep = duality_defect(&s, &a).unwrap();
                assert!(rep.holds(), "{rep:?}");
                if a.places.is_empty() {
                    assert_eq!(rep.relaxed_dim, rep.strict_dim);
                }
            }
        }
    }

    #[test]
    fn perturbed_loc_map_breaks_duality() {
        let mut failures = 0;
        for seed in 0..20 {
            let mut s = generate_dual_pair(2, &shape(&[4, 2], 0, 0), seed).unwrap();
            s.loc_maps[0].rows[0][0] ^= 1;
            let rep = duality_defect(&s, &IdealTag::new(vec![0, 1])).unwrap();
            if !rep.holds() {
                failures += 1;
            }
        }
        assert!(failures > 10);
    }

    #[test]
    fn generation_is_deterministic_and_validates_shapes() {
        let sh = shape(&[2, 4, 0], 2, 1);
        assert_eq!(generate_dual_pair(5, &sh, 9).unwrap(), generate_dual_pair(5, &sh, 9).unwrap());
        assert!(generate_dual_pair(2, &shape(&[3], 0, 0), 0).is_err());
        assert!(generate_dual_pair(7, &sh, 0).is_err());
        let bad = DualShape { places: vec![PlaceSpec { dim: 4, shape: PlaceShape::P1 }], ..Default::default() };
        assert!(generate_dual_pair(2, &bad, 0).is_err());
    }

    #[test]
    fn drop_chain_reaches_zero() {
        let mut seen = 0;
        for seed in 0..100 {
            let s = generate_dual_pair(2, &shape(&[2, 2, 2, 2, 2], 0, 3), seed).unwrap();
            let r = selmer_kernel(&s, BASE_TAG).unwrap().dim();
            let (t, certs) = choose_drop_chain(&s, &[0, 1, 2, 3, 4]).unwrap();
            for (k, c) in certs.iter().enumerate() {
                assert!(c.exact);
                assert_eq!(c.dim_after, r - k - 1);
            }
            if certs.last().is_some_and(|c| c.dim_after == 0) {
                seen += 1;
                let l = add_transverse_tag(&s, "L", &t, seed).unwrap();
                let rep = relative_dim_pipeline(&l, &t.places, &[], "L").unwrap();
                assert_eq!(rep.relative_dim, 0);
                assert_eq!(rep.r, rep.t);
            }
        }
        assert!(seen > 50);
    }

    #[test]
    fn drop_not_applicable_when_localization_vanishes() {
        for seed in 0..50 {
            let s = generate_dual_pair(2, &shape(&[2, 2], 1, 0), seed).unwrap();
            let (_, strict) = relaxed_strict(&s, &IdealTag::empty()).unwrap();
            if strict.image(&s.loc_maps[0]).dim() == 0 {
                assert!(matches!(dimension_drop_step(&s, &IdealTag::empty(), 0), Err(SelmerError::NotApplicable(_))));
                return;
            }
        }
        panic!("no vanishing instance found");
    }

    #[test]
    fn empty_t_returns_r() {
        let s = generate_dual_pair(3, &shape(&[2, 4], 1, 1), 4).unwrap();
        let l = add_transverse_tag(&s, "L", &IdealTag::empty(), 0).unwrap();
        let rep = relative_dim_pipeline(&l, &[], &[], "L").unwrap();
        assert_eq!(rep.relative_dim, rep.r);
    }

    #[test]
    fn rank_bound() {
        assert!(check_rank_bound(0, 0, 2, 0).is_ok());
        assert!(check_rank_bound(1, 2, 2, 1).is_ok());
        assert!(check_rank_bound(1, 3, 2, 1).is_err());
        assert!(check_rank_bound(2, 1, 3, 5).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let s = generate_dual_pair(2, &shape(&[2, 0], 1, 0), 11).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        let back: SelmerStructure = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        back.validate().unwrap();
    }
}
