//! Voxelized parts, procedural shape families and the build domain
//! (part plus substrate) the solver runs on.

use std::collections::VecDeque;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pack_bits, unpack_bits, Coord, Dims, FACE_BOTTOM, FACE_DIRS};

/// Largest part dimension after normalization, in mm.
pub const NORMALIZED_EXTENT_MM: f64 = 40.0;
pub const DEFAULT_SUBSTRATE_LAYERS: usize = 2;
pub const DEFAULT_AMBIENT_C: f64 = 25.0;

const VOXEL_MAGIC: &[u8; 8] = b"VOXPART1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    /// Solid block with rectangular pockets carved from the top.
    Carved,
    /// Tiers of shrinking rectangular blocks.
    Stacked,
    /// Block with a cylindrical through-hole.
    Holed,
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carved" => Ok(Self::Carved),
            "stacked" => Ok(Self::Stacked),
            "holed" => Ok(Self::Holed),
            other => Err(Error::InvalidArgument(format!("unknown shape family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPart {
    dims: Dims,
    occupancy: Vec<bool>,
    element_size_mm: f64,
}

impl VoxelPart {
    /// Build a part, rejecting anything that violates the part invariants.
    pub fn new(dims: Dims, occupancy: Vec<bool>, element_size_mm: f64) -> Result<Self> {
        let part = Self {
            dims,
            occupancy,
            element_size_mm,
        };
        part.validate()?;
        Ok(part)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn element_size_mm(&self) -> f64 {
        self.element_size_mm
    }

    pub fn is_occupied(&self, c: Coord) -> bool {
        self.occupancy[self.dims.index(c)]
    }

    pub fn voxel_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.nx == 0 || d.ny == 0 || d.nz == 0 {
            return Err(Error::InvalidGeometry(format!("zero-sized dims {:?}", d.as_array())));
        }
        if self.occupancy.len() != d.len() {
            return Err(Error::InvalidGeometry(format!(
                "occupancy has {} entries, dims need {}",
                self.occupancy.len(),
                d.len()
            )));
        }
        if !(self.element_size_mm.is_finite() && self.element_size_mm > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "element size must be positive, got {}",
                self.element_size_mm
            )));
        }
        let Some(seed) = self.occupancy.iter().position(|&o| o) else {
            return Err(Error::InvalidGeometry("part has no occupied voxels".into()));
        };
        let reached = flood_fill(d, &self.occupancy, seed);
        let total = self.voxel_count();
        if reached != total {
            return Err(Error::InvalidGeometry(format!(
                "part is not 6-connected: flood fill reached {reached} of {total} voxels"
            )));
        }
        for idx in 0..d.len() {
            if !self.occupancy[idx] {
                continue;
            }
            let c = d.coord(idx);
            if c.k == 0 {
                continue;
            }
            // a supporting neighbor is any occupied 6-neighbor at the same or lower z
            let supported = FACE_DIRS
                .iter()
                .filter(|dir| dir[2] <= 0)
                .filter_map(|dir| d.offset(c, *dir))
                .any(|n| self.occupancy[d.index(n)]);
            if !supported {
                return Err(Error::InvalidGeometry(format!(
                    "voxel ({}, {}, {}) is unsupported",
                    c.i, c.j, c.k
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(VOXEL_MAGIC)?;
        for n in self.dims.as_array() {
            w.write_u32::<LittleEndian>(n as u32)?;
        }
        w.write_f64::<LittleEndian>(self.element_size_mm)?;
        w.write_all(&pack_bits(&self.occupancy))?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("voxel file truncated before magic".into()))?;
        if &magic != VOXEL_MAGIC {
            return Err(Error::Format("bad voxel file magic".into()));
        }
        let mut dims = [0usize; 3];
        for n in &mut dims {
            *n = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Format("voxel file truncated in header".into()))?
                as usize;
        }
        let element_size = r
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::Format("voxel file truncated in header".into()))?;
        let dims = Dims::new(dims[0], dims[1], dims[2]);
        let mut bytes = vec![0u8; dims.len().div_ceil(8)];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("voxel file truncated in occupancy payload".into()))?;
        Self::new(dims, unpack_bits(&bytes, dims.len()), element_size)
    }
}

/// Number of occupied voxels reachable from `start` through face neighbors.
fn flood_fill(d: Dims, occupied: &[bool], start: usize) -> usize {
    let mut seen = vec![false; d.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 0;
    while let Some(idx) = queue.pop_front() {
        count += 1;
        let c = d.coord(idx);
        for dir in FACE_DIRS {
            if let Some(n) = d.offset(c, dir) {
                let ni = d.index(n);
                if occupied[ni] && !seen[ni] {
                    seen[ni] = true;
                    queue.push_back(ni);
                }
            }
        }
    }
    count
}

/// Deterministically generate a part of the given family.
///
/// The element size is chosen so the largest dimension spans 40 mm.
pub fn generate_shape(seed: u64, family: ShapeFamily, dims: Dims) -> Result<VoxelPart> {
    if dims.nx < 4 || dims.ny < 4 || dims.nz < 4 {
        return Err(Error::InvalidArgument(format!(
            "shape dims must each be >= 4, got {:?}",
            dims.as_array()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occupancy = match family {
        ShapeFamily::Carved => carved(&mut rng, dims),
        ShapeFamily::Stacked => stacked(&mut rng, dims),
        ShapeFamily::Holed => holed(&mut rng, dims),
    };
    let element_size = NORMALIZED_EXTENT_MM / dims.max_extent() as f64;
    VoxelPart::new(dims, occupancy, element_size)
}

/// Random sub-interval `[lo, lo + len)` of `0..n` with `len` in `min_len..=max_len`.
fn span(rng: &mut ChaCha8Rng, n: usize, min_len: usize, max_len: usize) -> (usize, usize) {
    let max_len = max_len.clamp(1, n);
    let min_len = min_len.clamp(1, max_len);
    let len = rng.gen_range(min_len..=max_len);
    let lo = rng.gen_range(0..=n - len);
    (lo, lo + len)
}

fn carved(rng: &mut ChaCha8Rng, d: Dims) -> Vec<bool> {
    let mut occ = vec![true; d.len()];
    let pockets = rng.gen_range(1..=2);
    for _ in 0..pockets {
        let (x0, x1) = span(rng, d.nx, d.nx / 4, d.nx / 2);
        let (y0, y1) = span(rng, d.ny, d.ny / 4, d.ny / 2);
        // pockets are open to the top and never reach the bottom slab
        let z0 = rng.gen_range((d.nz / 3).max(1)..d.nz);
        for k in z0..d.nz {
            for j in y0..y1 {
                for i in x0..x1 {
                    occ[d.index(Coord::new(i, j, k))] = false;
                }
            }
        }
    }
    occ
}

fn stacked(rng: &mut ChaCha8Rng, d: Dims) -> Vec<bool> {
    let mut occ = vec![false; d.len()];
    let tiers = rng.gen_range(2..=3usize).min(d.nz);
    // tier boundaries in z; the last tier reaches the top
    let mut cuts: Vec<usize> = Vec::with_capacity(tiers + 1);
    cuts.push(0);
    for t in 1..tiers {
        let lo = (cuts[t - 1] + 1).max(t * d.nz / (tiers + 1));
        let hi = (d.nz - (tiers - t)).max(lo);
        cuts.push(rng.gen_range(lo..=hi));
    }
    cuts.push(d.nz);
    let (mut x0, mut x1, mut y0, mut y1) = (0, d.nx, 0, d.ny);
    for t in 0..tiers {
        if t > 0 {
            let (a, b) = span(rng, x1 - x0, (x1 - x0) / 2, (x1 - x0) * 3 / 4);
            let (c, e) = span(rng, y1 - y0, (y1 - y0) / 2, (y1 - y0) * 3 / 4);
            (x0, x1, y0, y1) = (x0 + a, x0 + b, y0 + c, y0 + e);
        }
        for k in cuts[t]..cuts[t + 1] {
            for j in y0..y1 {
                for i in x0..x1 {
                    occ[d.index(Coord::new(i, j, k))] = true;
                }
            }
        }
    }
    occ
}

fn holed(rng: &mut ChaCha8Rng, d: Dims) -> Vec<bool> {
    let mut occ = vec![true; d.len()];
    let axis = rng.gen_range(0..3usize);
    let n = d.as_array();
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (na, nb) = (n[a] as f64, n[b] as f64);
    // leave at least one voxel of wall on every side
    let r_max = ((na.min(nb) - 2.0) / 2.0).max(1.0);
    let r = rng.gen_range(1.0..=r_max);
    let ca = rng.gen_range((r + 1.0)..=(na - r - 1.0).max(r + 1.0));
    let cb = rng.gen_range((r + 1.0)..=(nb - r - 1.0).max(r + 1.0));
    for idx in 0..d.len() {
        let c = d.coord(idx);
        let p = [c.i as f64 + 0.5, c.j as f64 + 0.5, c.k as f64 + 0.5];
        let da = p[a] - ca;
        let db = p[b] - cb;
        if da * da + db * db < r * r {
            occ[idx] = false;
        }
    }
    occ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Shared with another active element.
    Interior,
    Convection,
    Dirichlet,
}

/// The simulation domain: a part sitting on `substrate_layers` full-footprint
/// layers, all on one uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildDomain {
    dims: Dims,
    occupied: Vec<bool>,
    part_mask: Vec<bool>,
    substrate_layers: usize,
    element_size_mm: f64,
    pub ambient_c: f64,
    pub dirichlet_c: f64,
}

/// Place `part` on top of `layers` substrate layers.
pub fn attach_substrate(part: &VoxelPart, layers: usize) -> Result<BuildDomain> {
    if layers < 1 {
        return Err(Error::InvalidArgument("substrate needs at least one layer".into()));
    }
    Ok(BuildDomain::assemble(part, layers))
}

impl BuildDomain {
    /// A domain with no substrate and therefore no Dirichlet faces.
    pub fn without_substrate(part: &VoxelPart) -> Self {
        Self::assemble(part, 0)
    }

    fn assemble(part: &VoxelPart, layers: usize) -> Self {
        let pd = part.dims();
        let dims = Dims::new(pd.nx, pd.ny, pd.nz + layers);
        let mut occupied = vec![false; dims.len()];
        let mut part_mask = vec![false; dims.len()];
        for idx in 0..dims.len() {
            let c = dims.coord(idx);
            if c.k < layers {
                occupied[idx] = true;
            } else if part.is_occupied(Coord::new(c.i, c.j, c.k - layers)) {
                occupied[idx] = true;
                part_mask[idx] = true;
            }
        }
        Self {
            dims,
            occupied,
            part_mask,
            substrate_layers: layers,
            element_size_mm: part.element_size_mm(),
            ambient_c: DEFAULT_AMBIENT_C,
            dirichlet_c: DEFAULT_AMBIENT_C,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn element_size_mm(&self) -> f64 {
        self.element_size_mm
    }

    pub fn element_size_m(&self) -> f64 {
        self.element_size_mm * 1e-3
    }

    pub fn substrate_layers(&self) -> usize {
        self.substrate_layers
    }

    pub fn is_occupied(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    pub fn is_part(&self, idx: usize) -> bool {
        self.part_mask[idx]
    }

    pub fn is_substrate(&self, idx: usize) -> bool {
        self.occupied[idx] && !self.part_mask[idx]
    }

    pub fn part_voxel_count(&self) -> usize {
        self.part_mask.iter().filter(|&&p| p).count()
    }

    /// Recover the part (without substrate).
    pub fn part(&self) -> VoxelPart {
        let d = self.dims;
        let pd = Dims::new(d.nx, d.ny, d.nz - self.substrate_layers);
        let occupancy = (0..pd.len())
            .map(|idx| {
                let c = pd.coord(idx);
                self.part_mask[d.index(Coord::new(c.i, c.j, c.k + self.substrate_layers))]
            })
            .collect();
        VoxelPart {
            dims: pd,
            occupancy,
            element_size_mm: self.element_size_mm,
        }
    }

    /// Whether face `dir` (an index into [`FACE_DIRS`]) of element `idx`
    /// is a Dirichlet face. Only bottom faces of the lowest substrate layer are.
    #[inline]
    pub fn is_dirichlet_face(&self, c: Coord, dir: usize) -> bool {
        self.substrate_layers > 0 && dir == FACE_BOTTOM && c.k == 0
    }

    /// Classify a face of an active element given the current activation set.
    pub fn face_kind(&self, idx: usize, dir: usize, active: &[bool]) -> FaceKind {
        let c = self.dims.coord(idx);
        if self.is_dirichlet_face(c, dir) {
            return FaceKind::Dirichlet;
        }
        match self.dims.offset(c, FACE_DIRS[dir]) {
            Some(n) if active[self.dims.index(n)] => FaceKind::Interior,
            _ => FaceKind::Convection,
        }
    }

    /// Activation set with substrate on and every part voxel off.
    pub fn initial_active(&self) -> Vec<bool> {
        (0..self.dims.len()).map(|i| self.is_substrate(i)).collect()
    }

    /// Count (convection, dirichlet) faces for an activation set.
    pub fn face_counts(&self, active: &[bool]) -> (usize, usize) {
        let mut conv = 0;
        let mut dir_count = 0;
        for idx in (0..self.dims.len()).filter(|&i| active[i]) {
            for dir in 0..6 {
                match self.face_kind(idx, dir, active) {
                    FaceKind::Convection => conv += 1,
                    FaceKind::Dirichlet => dir_count += 1,
                    FaceKind::Interior => {}
                }
            }
        }
        (conv, dir_count)
    }
}
