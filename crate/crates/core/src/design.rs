//! Pixelated aperture designs with 8-fold dihedral symmetry.
//!
//! A full design is an 18×18 binary pixel grid (1 = metallized, 0 = open).
//! Every design handled by the optimizer is invariant under the dihedral-4
//! group acting on the grid: horizontal mirror, vertical mirror, transposition
//! and their compositions. Under that constraint the independent degrees of
//! freedom collapse to a 45-bit fundamental domain — the upper triangle
//! (row ≤ col) of the upper-left 9×9 quadrant, enumerated row-major.
//!
//! The group orbits partition the 324 grid cells into 45 classes: the 9
//! fundamental cells on the quadrant diagonal have orbits of size 4, the
//! remaining 36 have orbits of size 8 (9·4 + 36·8 = 324).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Number of independent bits in the symmetry-reduced fundamental domain.
pub const OCTANT_BITS: usize = 45;
/// Side length of the full pixel grid.
pub const GRID_SIZE: usize = 18;
/// Total number of pixels in the full grid.
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE;

/// Fundamental-domain cells (row, col), row-major with row ≤ col ≤ 8.
pub const OCTANT_CELLS: [(usize, usize); OCTANT_BITS] = octant_cells();

const fn octant_cells() -> [(usize, usize); OCTANT_BITS] {
    let mut cells = [(0usize, 0usize); OCTANT_BITS];
    let mut k = 0;
    let mut r = 0;
    while r < 9 {
        let mut c = r;
        while c < 9 {
            cells[k] = (r, c);
            k += 1;
            c += 1;
        }
        r += 1;
    }
    cells
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DesignError {
    /// A grid cell disagrees with another member of its symmetry orbit.
    #[error("grid is not dihedral-symmetric: orbit of cell ({0}, {1}) holds mixed values")]
    SymmetryViolation(usize, usize),
    /// A serialized design string was not 45 characters of '0'/'1'.
    #[error("invalid design encoding {0:?}: expected {OCTANT_BITS} characters of '0' or '1'")]
    BadEncoding(String),
}

/// A symmetry-reduced design: one bit per fundamental-domain cell.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct OctantDesign {
    bits: [u8; OCTANT_BITS],
}

impl OctantDesign {
    /// Builds a design from raw bits; any nonzero byte counts as a set bit.
    pub fn from_bits(bits: [u8; OCTANT_BITS]) -> Self {
        let mut norm = [0u8; OCTANT_BITS];
        for (dst, &src) in norm.iter_mut().zip(bits.iter()) {
            *dst = u8::from(src != 0);
        }
        Self { bits: norm }
    }

    /// The all-open (all-zero) design.
    pub fn zeros() -> Self {
        Self { bits: [0; OCTANT_BITS] }
    }

    /// The fully metallized design.
    pub fn ones() -> Self {
        Self { bits: [1; OCTANT_BITS] }
    }

    pub fn bit(&self, idx: usize) -> u8 {
        self.bits[idx]
    }

    pub fn set_bit(&mut self, idx: usize, value: bool) {
        self.bits[idx] = u8::from(value);
    }

    pub fn bits(&self) -> &[u8; OCTANT_BITS] {
        &self.bits
    }

    /// Number of set bits in the fundamental domain.
    pub fn weight(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Packs the 45 bits into the low bits of a u64 (bit i at position i).
    pub fn as_u64(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    /// Hamming distance between two designs.
    pub fn hamming(&self, other: &Self) -> usize {
        (self.as_u64() ^ other.as_u64()).count_ones() as usize
    }
}

impl fmt::Display for OctantDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for OctantDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OctantDesign({self})")
    }
}

impl FromStr for OctantDesign {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != OCTANT_BITS {
            return Err(DesignError::BadEncoding(s.to_owned()));
        }
        let mut bits = [0u8; OCTANT_BITS];
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => bits[i] = 0,
                '1' => bits[i] = 1,
                _ => return Err(DesignError::BadEncoding(s.to_owned())),
            }
        }
        Ok(Self { bits })
    }
}

/// Draws a design with each fundamental bit set independently with probability 1/2.
pub fn random_design<R: Rng + ?Sized>(rng: &mut R) -> OctantDesign {
    let mut bits = [0u8; OCTANT_BITS];
    for b in bits.iter_mut() {
        *b = u8::from(rng.gen::<bool>());
    }
    OctantDesign { bits }
}

/// A full 18×18 binary pixel grid. Not necessarily symmetric: symmetry is
/// guaranteed for grids produced by [`expand_octant`] and checked by
/// [`fold_grid`].
#[derive(Clone, PartialEq, Eq)]
pub struct GridDesign {
    cells: [[u8; GRID_SIZE]; GRID_SIZE],
}

impl GridDesign {
    pub fn from_cells(cells: [[u8; GRID_SIZE]; GRID_SIZE]) -> Self {
        let mut norm = [[0u8; GRID_SIZE]; GRID_SIZE];
        for r in 0..GRID_SIZE {
            for c in 0..GRID_SIZE {
                norm[r][c] = u8::from(cells[r][c] != 0);
            }
        }
        Self { cells: norm }
    }

    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }

    /// Count of metallized pixels.
    pub fn ones(&self) -> usize {
        self.cells
            .iter()
            .map(|row| row.iter().map(|&c| c as usize).sum::<usize>())
            .sum()
    }
}

impl fmt::Debug for GridDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GridDesign [")?;
        for row in &self.cells {
            write!(f, "  ")?;
            for &c in row {
                f.write_str(if c == 1 { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// The dihedral-4 orbit of a cell: up to 8 images under mirrors and transposition.
/// Duplicates are removed, so diagonal fundamental cells yield 4 images.
pub fn orbit(row: usize, col: usize) -> Vec<(usize, usize)> {
    let m = GRID_SIZE - 1;
    let candidates = [
        (row, col),
        (col, row),
        (row, m - col),
        (m - col, row),
        (m - row, col),
        (col, m - row),
        (m - row, m - col),
        (m - col, m - row),
    ];
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(8);
    for cand in candidates {
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// Expands a 45-bit fundamental domain into the full symmetric 18×18 grid.
pub fn expand_octant(design: &OctantDesign) -> GridDesign {
    let mut cells = [[0u8; GRID_SIZE]; GRID_SIZE];
    for (idx, &(r, c)) in OCTANT_CELLS.iter().enumerate() {
        if design.bits[idx] == 1 {
            for (or, oc) in orbit(r, c) {
                cells[or][oc] = 1;
            }
        }
    }
    GridDesign { cells }
}

/// Recovers the fundamental-domain bits from a symmetric grid.
///
/// Fails with [`DesignError::SymmetryViolation`] if any orbit holds mixed
/// values, naming the first offending fundamental cell.
pub fn fold_grid(grid: &GridDesign) -> Result<OctantDesign, DesignError> {
    let mut bits = [0u8; OCTANT_BITS];
    for (idx, &(r, c)) in OCTANT_CELLS.iter().enumerate() {
        let value = grid.cells[r][c];
        for (or, oc) in orbit(r, c) {
            if grid.cells[or][oc] != value {
                return Err(DesignError::SymmetryViolation(r, c));
            }
        }
        bits[idx] = value;
    }
    Ok(OctantDesign { bits })
}

/// Scalar geometry descriptors of a grid, each normalized to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignFeatures {
    /// Fraction of metallized pixels.
    pub fill_fraction: f64,
    /// Fraction of metallized pixels inside the largest 4-connected metallic
    /// component (0 when the grid is fully open).
    pub connectivity: f64,
    /// Adjacent-pixel transition count along rows and columns, normalized by
    /// the 2·17·18 = 612 available neighbor pairs (a checkerboard scores 1).
    pub roughness: f64,
}

/// Computes the geometry descriptors of a grid.
pub fn features(grid: &GridDesign) -> DesignFeatures {
    let ones = grid.ones();
    let fill_fraction = ones as f64 / GRID_CELLS as f64;

    let connectivity = if ones == 0 {
        0.0
    } else {
        largest_component(grid) as f64 / ones as f64
    };

    let mut transitions = 0usize;
    for i in 0..GRID_SIZE {
        for j in 0..GRID_SIZE - 1 {
            transitions += usize::from(grid.cells[i][j] != grid.cells[i][j + 1]);
            transitions += usize::from(grid.cells[j][i] != grid.cells[j + 1][i]);
        }
    }
    let roughness = transitions as f64 / (2 * (GRID_SIZE - 1) * GRID_SIZE) as f64;

    DesignFeatures {
        fill_fraction,
        connectivity,
        roughness,
    }
}

/// Size of the largest 4-connected component of metallized pixels.
fn largest_component(grid: &GridDesign) -> usize {
    let mut seen = [[false; GRID_SIZE]; GRID_SIZE];
    let mut stack: Vec<(usize, usize)> = Vec::with_capacity(GRID_CELLS);
    let mut best = 0;
    for r in 0..GRID_SIZE {
        for c in 0..GRID_SIZE {
            if grid.cells[r][c] == 0 || seen[r][c] {
                continue;
            }
            seen[r][c] = true;
            stack.push((r, c));
            let mut size = 0;
            while let Some((i, j)) = stack.pop() {
                size += 1;
                let mut visit = |x: usize, y: usize| {
                    if grid.cells[x][y] == 1 && !seen[x][y] {
                        seen[x][y] = true;
                        stack.push((x, y));
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < GRID_SIZE {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < GRID_SIZE {
                    visit(i, j + 1);
                }
            }
            best = best.max(size);
        }
    }
    best
}
