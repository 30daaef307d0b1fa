//! Sudoku as a constraint-generation task.
//!
//! Grids are parameterized by the box edge `boxn` (side = boxn^2): boxn = 2
//! is the 4x4 puzzle with 288 solutions, boxn = 3 the standard 9x9. Cells
//! hold 0 for empty, otherwise 1..=side. Variables are cells, encoded one-hot
//! with +/-1 entries; a puzzle instance is a solution plus an observation
//! mask whose clue count sets the difficulty.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::Adjacency;
use crate::types::VariableSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SudokuGrid {
    boxn: usize,
    cells: Vec<u8>,
}

impl SudokuGrid {
    pub fn empty(boxn: usize) -> Result<Self> {
        if !(2..=3).contains(&boxn) {
            return Err(Error::Config(format!("box edge {boxn} not supported (2 or 3)")));
        }
        let side = boxn * boxn;
        Ok(Self { boxn, cells: vec![0; side * side] })
    }

    pub fn from_cells(boxn: usize, cells: Vec<u8>) -> Result<Self> {
        let mut grid = Self::empty(boxn)?;
        let side = grid.side();
        if cells.len() != side * side {
            return Err(Error::Contract(format!(
                "{} cells for a {side}x{side} grid",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&v| v as usize > side) {
            return Err(Error::Contract(format!("cell value {bad} exceeds {side}")));
        }
        grid.cells = cells;
        Ok(grid)
    }

    pub fn boxn(&self) -> usize {
        self.boxn
    }

    pub fn side(&self) -> usize {
        self.boxn * self.boxn
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, idx: usize) -> u8 {
        self.cells[idx]
    }

    pub fn set(&mut self, idx: usize, v: u8) {
        debug_assert!(v as usize <= self.side());
        self.cells[idx] = v;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    fn box_of(&self, idx: usize) -> usize {
        let side = self.side();
        let (r, c) = (idx / side, idx % side);
        (r / self.boxn) * self.boxn + c / self.boxn
    }

    pub fn peers(&self, idx: usize) -> Vec<usize> {
        let side = self.side();
        let (r, c) = (idx / side, idx % side);
        (0..side * side)
            .filter(|&j| {
                j != idx
                    && (j / side == r || j % side == c || self.box_of(j) == self.box_of(idx))
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|&v| v != 0)
    }

    /// Complete and every row, column, and box holds each digit once.
    pub fn is_valid(&self) -> bool {
        self.is_complete() && self.l1_error() == 0
    }

    /// Sum over all units (rows, columns, boxes) of the L1 distance between
    /// the unit's digit histogram and the all-ones target. Zero exactly for
    /// valid grids; retyping one cell of a valid grid costs 6.
    pub fn l1_error(&self) -> usize {
        let side = self.side();
        let mut err = 0usize;
        let mut hist = vec![0usize; side];
        let tally = |err: &mut usize, hist: &mut Vec<usize>, cells: &mut dyn Iterator<Item = usize>| {
            hist.iter_mut().for_each(|h| *h = 0);
            for idx in cells {
                let v = self.cells[idx];
                if v != 0 {
                    hist[v as usize - 1] += 1;
                }
            }
            *err += hist.iter().map(|&h| h.abs_diff(1)).sum::<usize>();
        };
        for r in 0..side {
            tally(&mut err, &mut hist, &mut (0..side).map(|c| r * side + c));
        }
        for c in 0..side {
            tally(&mut err, &mut hist, &mut (0..side).map(|r| r * side + c));
        }
        for b in 0..side {
            let (br, bc) = (b / self.boxn * self.boxn, b % self.boxn * self.boxn);
            let boxn = self.boxn;
            tally(
                &mut err,
                &mut hist,
                &mut (0..side).map(move |k| (br + k / boxn) * side + bc + k % boxn),
            );
        }
        err
    }

    /// Filled cells agree with `solution` wherever `mask` is set.
    pub fn matches_clues(&self, solution: &SudokuGrid, mask: &[bool]) -> bool {
        mask.iter()
            .enumerate()
            .all(|(i, &m)| !m || self.cells[i] == solution.cells[i])
    }
}

struct Masks {
    row: Vec<u16>,
    col: Vec<u16>,
    boxes: Vec<u16>,
}

impl Masks {
    fn new(grid: &SudokuGrid) -> Self {
        let side = grid.side();
        let mut m = Self { row: vec![0; side], col: vec![0; side], boxes: vec![0; side] };
        for idx in 0..grid.n_cells() {
            if grid.cells[idx] != 0 {
                m.place(grid, idx, grid.cells[idx]);
            }
        }
        m
    }

    fn place(&mut self, grid: &SudokuGrid, idx: usize, v: u8) {
        let side = grid.side();
        let bit = 1u16 << (v - 1);
        self.row[idx / side] |= bit;
        self.col[idx % side] |= bit;
        self.boxes[grid.box_of(idx)] |= bit;
    }

    fn remove(&mut self, grid: &SudokuGrid, idx: usize, v: u8) {
        let side = grid.side();
        let bit = !(1u16 << (v - 1));
        self.row[idx / side] &= bit;
        self.col[idx % side] &= bit;
        self.boxes[grid.box_of(idx)] &= bit;
    }

    fn free(&self, grid: &SudokuGrid, idx: usize) -> u16 {
        let side = grid.side();
        let full = (1u16 << side) - 1;
        full & !(self.row[idx / side] | self.col[idx % side] | self.boxes[grid.box_of(idx)])
    }
}

fn fill_from<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &mut SudokuGrid,
    masks: &mut Masks,
    idx: usize,
    nodes: &mut usize,
    budget: usize,
) -> bool {
    if idx == grid.n_cells() {
        return true;
    }
    *nodes += 1;
    if *nodes > budget {
        return false;
    }
    let side = grid.side();
    let mut digits: Vec<u8> = (1..=side as u8).filter(|v| masks.free(grid, idx) & (1 << (v - 1)) != 0).collect();
    digits.shuffle(rng);
    for v in digits {
        grid.cells[idx] = v;
        masks.place(grid, idx, v);
        if fill_from(rng, grid, masks, idx + 1, nodes, budget) {
            return true;
        }
        masks.remove(grid, idx, v);
        grid.cells[idx] = 0;
    }
    false
}

/// Uniformly seeded random complete grid via randomized backtracking.
pub fn generate_solution<R: Rng + ?Sized>(rng: &mut R, boxn: usize) -> Result<SudokuGrid> {
    let mut grid = SudokuGrid::empty(boxn)?;
    loop {
        let mut masks = Masks::new(&grid);
        let mut nodes = 0;
        if fill_from(rng, &mut grid, &mut masks, 0, &mut nodes, 200_000) {
            return Ok(grid);
        }
        grid.cells.iter_mut().for_each(|c| *c = 0);
    }
}

/// Every complete valid grid, in lexicographic cell order. Practical for
/// boxn = 2 only (288 grids).
pub fn enumerate_solutions(boxn: usize) -> Result<Vec<SudokuGrid>> {
    let mut grid = SudokuGrid::empty(boxn)?;
    let mut masks = Masks::new(&grid);
    let mut out = Vec::new();
    fn dfs(grid: &mut SudokuGrid, masks: &mut Masks, idx: usize, out: &mut Vec<SudokuGrid>) {
        if idx == grid.n_cells() {
            out.push(grid.clone());
            return;
        }
        let free = masks.free(grid, idx);
        for v in 1..=grid.side() as u8 {
            if free & (1 << (v - 1)) != 0 {
                grid.cells[idx] = v;
                masks.place(grid, idx, v);
                dfs(grid, masks, idx + 1, out);
                masks.remove(grid, idx, v);
                grid.cells[idx] = 0;
            }
        }
    }
    dfs(&mut grid, &mut masks, 0, &mut out);
    Ok(out)
}

/// Difficulty tiers, set by how many cells get hidden. Bounds are inclusive
/// nominal draw counts and scale with the grid (thirds of the cell count).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

pub const ALL_DIFFICULTIES: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

impl Difficulty {
    pub fn masked_bounds(self, boxn: usize) -> (usize, usize) {
        let cells = boxn * boxn * boxn * boxn;
        let third = cells / 3;
        match self {
            Difficulty::Easy => (1, third),
            Difficulty::Medium => (third + 1, 2 * third),
            Difficulty::Hard => (2 * third + 1, cells),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Config(format!("unknown difficulty {other:?}"))),
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Observation mask for one instance: true marks a clue. The nominal hidden
/// count is uniform over the tier's bounds and cells are drawn with
/// replacement, so the distinct hidden count can land below the nominal draw
/// (heavier tiers hide roughly 60-75% of their nominal count).
pub fn sample_mask<R: Rng + ?Sized>(
    rng: &mut R,
    boxn: usize,
    difficulty: Difficulty,
) -> Result<Vec<bool>> {
    let cells = boxn * boxn * boxn * boxn;
    let (lo, hi) = difficulty.masked_bounds(boxn);
    let k = rng.gen_range(lo..=hi);
    let mut mask = vec![true; cells];
    for _ in 0..k {
        mask[rng.gen_range(0..cells)] = false;
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOrder {
    Random,
    Greedy,
}

impl std::str::FromStr for OracleOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(OracleOrder::Random),
            "greedy" => Ok(OracleOrder::Greedy),
            other => Err(Error::Config(format!("unknown oracle order {other:?}"))),
        }
    }
}

impl std::fmt::Display for OracleOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OracleOrder::Random => "random",
            OracleOrder::Greedy => "greedy",
        })
    }
}

/// Single-pass constructive baseline: visits empty cells one at a time and
/// fills each with a uniform draw from the digits its filled peers still
/// allow (or from all digits once it is stuck), never backtracking. Random
/// order shuffles the empty cells up front; greedy always takes the most
/// constrained cell, the one whose filled peers cover the most digits,
/// breaking ties uniformly at random.
pub fn oracle_solve<R: Rng + ?Sized>(
    rng: &mut R,
    puzzle: &SudokuGrid,
    order: OracleOrder,
) -> SudokuGrid {
    let mut grid = puzzle.clone();
    let mut masks = Masks::new(&grid);
    let side = grid.side();
    let mut open: Vec<usize> = (0..grid.n_cells()).filter(|&i| grid.cells[i] == 0).collect();
    if order == OracleOrder::Random {
        open.shuffle(rng);
    }
    while !open.is_empty() {
        let pick = match order {
            OracleOrder::Random => 0,
            OracleOrder::Greedy => {
                let covered = |idx: usize| side as u32 - masks.free(&grid, idx).count_ones();
                let best = open.iter().map(|&i| covered(i)).max().unwrap();
                let ties: Vec<usize> =
                    (0..open.len()).filter(|&k| covered(open[k]) == best).collect();
                ties[rng.gen_range(0..ties.len())]
            }
        };
        let idx = open.swap_remove(pick);
        let free = masks.free(&grid, idx);
        let candidates: Vec<u8> =
            (1..=side as u8).filter(|v| free & (1 << (v - 1)) != 0).collect();
        let v = if candidates.is_empty() {
            rng.gen_range(1..=side as u8)
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        grid.cells[idx] = v;
        masks.place(&grid, idx, v);
    }
    grid
}

/// Cell adjacency: same row, column, or box.
pub fn sudoku_adjacency(boxn: usize) -> Result<Adjacency> {
    let grid = SudokuGrid::empty(boxn)?;
    let mut adj = Adjacency::new(grid.n_cells());
    for i in 0..grid.n_cells() {
        for j in grid.peers(i) {
            adj.connect(i, j);
        }
    }
    Ok(adj)
}

/// One-hot +/-1 encoding: cell value v becomes a side-length vector with +1
/// in slot v-1. Requires a complete grid.
pub fn encode(grid: &SudokuGrid) -> Result<VariableSet> {
    if !grid.is_complete() {
        return Err(Error::Contract("cannot encode a grid with empty cells".into()));
    }
    let side = grid.side();
    let mut data = vec![-1.0; grid.n_cells() * side];
    for (i, &v) in grid.cells.iter().enumerate() {
        data[i * side + v as usize - 1] = 1.0;
    }
    VariableSet::new(grid.n_cells(), side, data)
}

/// Encoding for a partially filled grid: filled cells one-hot as in
/// [`encode`] and reported observed, empty cells all zero.
pub fn encode_clues(grid: &SudokuGrid) -> Result<(VariableSet, Vec<bool>)> {
    let side = grid.side();
    let mut data = vec![0.0; grid.n_cells() * side];
    let mut observed = vec![false; grid.n_cells()];
    for (i, &v) in grid.cells.iter().enumerate() {
        if v > 0 {
            observed[i] = true;
            for d in 0..side {
                data[i * side + d] = if d == v as usize - 1 { 1.0 } else { -1.0 };
            }
        }
    }
    Ok((VariableSet::new(grid.n_cells(), side, data)?, observed))
}

/// Argmax decode; ties go to the smaller digit.
pub fn decode(vars: &VariableSet, boxn: usize) -> Result<SudokuGrid> {
    let side = boxn * boxn;
    if vars.n() != side * side || vars.dim() != side {
        return Err(Error::Contract(format!(
            "decode expects {}x{side}, got {}x{}",
            side * side,
            vars.n(),
            vars.dim()
        )));
    }
    let cells = (0..vars.n())
        .map(|i| {
            let v = vars.var(i);
            let mut best = 0;
            for d in 1..side {
                if v[d] > v[best] {
                    best = d;
                }
            }
            best as u8 + 1
        })
        .collect();
    SudokuGrid::from_cells(boxn, cells)
}

/// Writes grids as a `b=<boxn>` header plus one digit string per line
/// (0 marks an empty cell).
pub fn write_grids(path: &std::path::Path, grids: &[SudokuGrid]) -> Result<()> {
    use std::io::Write;
    let boxn = match grids.first() {
        Some(g) => g.boxn,
        None => return Err(Error::Contract("refusing to write an empty grid file".into())),
    };
    if grids.iter().any(|g| g.boxn != boxn) {
        return Err(Error::Contract("mixed grid sizes in one file".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "b={boxn}")?;
    for g in grids {
        let line: String = g.cells.iter().map(|&v| char::from(b'0' + v)).collect();
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_grids(path: &std::path::Path) -> Result<Vec<SudokuGrid>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Contract("empty grid file".into()))?;
    let boxn: usize = header
        .strip_prefix("b=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Contract(format!("bad grid header {header:?}")))?;
    let mut grids = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells = line
            .bytes()
            .map(|b| {
                b.checked_sub(b'0')
                    .filter(|&v| (v as usize) <= boxn * boxn)
                    .ok_or_else(|| Error::Contract(format!("bad cell on line {}", ln + 2)))
            })
            .collect::<Result<Vec<u8>>>()?;
        grids.push(SudokuGrid::from_cells(boxn, cells)?);
    }
    Ok(grids)
}
