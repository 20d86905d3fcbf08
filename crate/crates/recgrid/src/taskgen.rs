//! Difficulty-parameterized, size-preserving grid task generators.
//!
//! Each built-in family is a deterministic grid transformation paired with a
//! difficulty-driven input sampler. A task spec fixes the family's hidden
//! parameters (color permutation, fill color, ...) from its seed, so one
//! task is one function; examples vary only through the sampler. External
//! example files (one JSON array of `{"input", "output"}` integer matrices,
//! the Re-ARC serialization) are ingested through [`load_dataset`].

use crate::error::{Error, Result};
use crate::seeding::{rng_for, SeedPart};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

/// Number of color classes. Cell values live in `[0, NUM_COLORS)`.
pub const NUM_COLORS: usize = 10;
/// Grid extents accepted anywhere in the pipeline.
pub const MIN_EXTENT: usize = 1;
pub const MAX_EXTENT: usize = 30;
/// Extents the difficulty mapping produces (keeps loop depth <= 56).
pub const MIN_GEN_EXTENT: usize = 4;
pub const MAX_GEN_EXTENT: usize = 28;

/// A colored grid: `h x w` cells with values in `[0, 10)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    h: usize,
    w: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn new(h: usize, w: usize, cells: Vec<u8>) -> Result<Self> {
        if !(MIN_EXTENT..=MAX_EXTENT).contains(&h) || !(MIN_EXTENT..=MAX_EXTENT).contains(&w) {
            return Err(Error::InvalidShape(format!(
                "grid extent {h}x{w} outside [{MIN_EXTENT}, {MAX_EXTENT}]"
            )));
        }
        if cells.len() != h * w {
            return Err(Error::InvalidShape(format!(
                "{} cells do not fill a {h}x{w} grid",
                cells.len()
            )));
        }
        if let Some(pos) = cells.iter().position(|&c| usize::from(c) >= NUM_COLORS) {
            return Err(Error::InvalidLabel {
                color: usize::from(cells[pos]),
                cell: pos,
                num_classes: NUM_COLORS,
            });
        }
        Ok(Self { h, w, cells })
    }

    pub fn filled(h: usize, w: usize, color: u8) -> Result<Self> {
        Self::new(h, w, vec![color; h * w])
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidShape("ragged grid rows".into()));
        }
        Self::new(h, w, rows.concat())
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.cells[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, color: u8) {
        debug_assert!(usize::from(color) < NUM_COLORS);
        self.cells[y * self.w + x] = color;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.h)
            .map(|y| self.cells[y * self.w..(y + 1) * self.w].to_vec())
            .collect()
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Grid {}x{}", self.h, self.w)?;
        for y in 0..self.h {
            for x in 0..self.w {
                write!(f, "{}", self.get(y, x))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// One training or evaluation example. Input and output always share extents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExamplePair {
    pub input: Grid,
    pub output: Grid,
}

impl ExamplePair {
    pub fn new(input: Grid, output: Grid) -> Result<Self> {
        if input.h != output.h || input.w != output.w {
            return Err(Error::InvalidShape(format!(
                "pair is not size-preserving: input {}x{}, output {}x{}",
                input.h, input.w, output.h, output.w
            )));
        }
        Ok(Self { input, output })
    }
}

/// Built-in generator families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RecolorMap,
    FillEnclosed,
    GravityDown,
    Denoise,
    BorderPaint,
    LargestObjectRecolor,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::RecolorMap,
        Family::FillEnclosed,
        Family::GravityDown,
        Family::Denoise,
        Family::BorderPaint,
        Family::LargestObjectRecolor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::RecolorMap => "recolor_map",
            Family::FillEnclosed => "fill_enclosed",
            Family::GravityDown => "gravity_down",
            Family::Denoise => "denoise",
            Family::BorderPaint => "border_paint",
            Family::LargestObjectRecolor => "largest_object_recolor",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete task: a family plus the seed that fixes its hidden parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub task_id: String,
    pub family: Family,
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, family: Family, seed: u64) -> Self {
        Self {
            task_id: task_id.into(),
            family,
            seed,
        }
    }

    /// Default spec for a built-in family, named after it.
    pub fn builtin(family: Family, seed: u64) -> Self {
        Self::new(family.name(), family, seed)
    }

    /// The task's fixed transformation parameters, derived from its seed.
    pub fn transform_params(&self) -> TransformParams {
        let mut rng = rng_for(
            self.seed,
            &[SeedPart::Str("transform"), SeedPart::Str(&self.task_id)],
        );
        match self.family {
            Family::RecolorMap => {
                // permutation of colors 1..=9; background 0 stays fixed
                let mut map: [u8; NUM_COLORS] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
                for i in (2..NUM_COLORS).rev() {
                    let j = rng.gen_range(1..=i);
                    map.swap(i, j);
                }
                TransformParams::Recolor(map)
            }
            Family::FillEnclosed => TransformParams::Fill(rng.gen_range(1..NUM_COLORS as u8)),
            Family::GravityDown => TransformParams::Gravity,
            Family::Denoise => TransformParams::Denoise,
            Family::BorderPaint => TransformParams::Border(rng.gen_range(1..NUM_COLORS as u8)),
            Family::LargestObjectRecolor => {
                TransformParams::LargestObject(rng.gen_range(1..NUM_COLORS as u8))
            }
        }
    }

    /// The task's input color palette (stable per task so examples share it).
    fn palette(&self) -> Vec<u8> {
        let mut colors: Vec<u8> = (1..NUM_COLORS as u8).collect();
        let mut rng = rng_for(
            self.seed,
            &[SeedPart::Str("palette"), SeedPart::Str(&self.task_id)],
        );
        for i in (1..colors.len()).rev() {
            let j = rng.gen_range(0..=i);
            colors.swap(i, j);
        }
        colors
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransformParams {
    Recolor([u8; NUM_COLORS]),
    Fill(u8),
    Gravity,
    Denoise,
    Border(u8),
    LargestObject(u8),
}

// ── Deterministic transformations ──────────────────────────────────────

/// Pointwise color map.
pub fn apply_color_map(grid: &Grid, map: &[u8; NUM_COLORS]) -> Grid {
    let cells = grid.cells.iter().map(|&c| map[usize::from(c)]).collect();
    Grid {
        h: grid.h,
        w: grid.w,
        cells,
    }
}

/// Paint every background cell that cannot reach the grid border through
/// background cells (4-connected) with `fill`.
pub fn fill_enclosed(grid: &Grid, fill: u8) -> Grid {
    let (h, w) = (grid.h, grid.w);
    let mut reachable = vec![false; h * w];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let border = y == 0 || y == h - 1 || x == 0 || x == w - 1;
            if border && grid.get(y, x) == 0 {
                reachable[y * w + x] = true;
                queue.push_back((y, x));
            }
        }
    }
    while let Some((y, x)) = queue.pop_front() {
        for (ny, nx) in neighbors4(y, x, h, w) {
            if grid.get(ny, nx) == 0 && !reachable[ny * w + nx] {
                reachable[ny * w + nx] = true;
                queue.push_back((ny, nx));
            }
        }
    }
    let mut out = grid.clone();
    for y in 0..h {
        for x in 0..w {
            if grid.get(y, x) == 0 && !reachable[y * w + x] {
                out.set(y, x, fill);
            }
        }
    }
    out
}

/// Per-column gravity: non-background cells fall to the bottom, order kept.
pub fn gravity_down(grid: &Grid) -> Grid {
    let (h, w) = (grid.h, grid.w);
    let mut out = Grid {
        h,
        w,
        cells: vec![0; h * w],
    };
    for x in 0..w {
        let column: Vec<u8> = (0..h).map(|y| grid.get(y, x)).filter(|&c| c != 0).collect();
        let offset = h - column.len();
        for (i, &c) in column.iter().enumerate() {
            out.set(offset + i, x, c);
        }
    }
    out
}

/// Remove non-background cells whose 8-neighborhood is entirely background.
pub fn denoise(grid: &Grid) -> Grid {
    let (h, w) = (grid.h, grid.w);
    let mut out = grid.clone();
    for y in 0..h {
        for x in 0..w {
            if grid.get(y, x) != 0 && is_isolated(grid, y, x) {
                out.set(y, x, 0);
            }
        }
    }
    out
}

fn is_isolated(grid: &Grid, y: usize, x: usize) -> bool {
    neighbors8(y, x, grid.h, grid.w).all(|(ny, nx)| grid.get(ny, nx) == 0)
}

/// Recolor the one-cell-thick border ring.
pub fn paint_border(grid: &Grid, color: u8) -> Grid {
    let (h, w) = (grid.h, grid.w);
    let mut out = grid.clone();
    for y in 0..h {
        for x in 0..w {
            if y == 0 || y == h - 1 || x == 0 || x == w - 1 {
                out.set(y, x, color);
            }
        }
    }
    out
}

/// Recolor the largest same-color 4-connected component of non-background
/// cells. Ties break to the component whose topmost-leftmost cell comes
/// first in row-major order. Grids with no objects are returned unchanged.
pub fn recolor_largest_object(grid: &Grid, color: u8) -> Grid {
    let (h, w) = (grid.h, grid.w);
    let mut comp = vec![usize::MAX; h * w];
    let mut best: Option<(usize, usize, usize)> = None; // (size, anchor, id)
    let mut n_comps = 0;
    for start in 0..h * w {
        if grid.cells[start] == 0 || comp[start] != usize::MAX {
            continue;
        }
        let id = n_comps;
        n_comps += 1;
        let target = grid.cells[start];
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = id;
        while let Some(cell) = queue.pop_front() {
            size += 1;
            let (y, x) = (cell / w, cell % w);
            for (ny, nx) in neighbors4(y, x, h, w) {
                let n = ny * w + nx;
                if grid.cells[n] == target && comp[n] == usize::MAX {
                    comp[n] = id;
                    queue.push_back(n);
                }
            }
        }
        // `start` is the component's topmost-leftmost cell by scan order
        let candidate = (size, start, id);
        best = match best {
            None => Some(candidate),
            Some(b) if size > b.0 || (size == b.0 && start < b.1) => Some(candidate),
            other => other,
        };
    }
    let Some((_, _, winner)) = best else {
        return grid.clone();
    };
    let mut out = grid.clone();
    for cell in 0..h * w {
        if comp[cell] == winner {
            out.cells[cell] = color;
        }
    }
    out
}

fn neighbors4(y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
        .into_iter()
        .filter_map(move |(dy, dx)| {
            let (ny, nx) = (y as i64 + dy, x as i64 + dx);
            (ny >= 0 && ny < h as i64 && nx >= 0 && nx < w as i64)
                .then_some((ny as usize, nx as usize))
        })
}

fn neighbors8(y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(move |dy| (-1i64..=1).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| dy != 0 || dx != 0)
        .filter_map(move |(dy, dx)| {
            let (ny, nx) = (y as i64 + dy, x as i64 + dx);
            (ny >= 0 && ny < h as i64 && nx >= 0 && nx < w as i64)
                .then_some((ny as usize, nx as usize))
        })
}

/// Ground-truth transformation the task embodies; total on valid grids.
pub fn transform_oracle(spec: &TaskSpec, input: &Grid) -> Grid {
    match spec.transform_params() {
        TransformParams::Recolor(map) => apply_color_map(input, &map),
        TransformParams::Fill(color) => fill_enclosed(input, color),
        TransformParams::Gravity => gravity_down(input),
        TransformParams::Denoise => denoise(input),
        TransformParams::Border(color) => paint_border(input, color),
        TransformParams::LargestObject(color) => recolor_largest_object(input, color),
    }
}

// ── Difficulty-driven sampling ──────────────────────────────────────────

/// Target extent for difficulty `d`: round(4 + 24 d), clamped to [4, 28].
fn target_extent(d: f64) -> usize {
    ((4.0 + 24.0 * d).round() as i64).clamp(4, 28) as usize
}

/// Height/width near the target: drawn from {s-2, s-1, s}, clamped to the
/// generated-extent range, so difficulty 0 always yields the smallest 4x4.
fn jittered_extent(s: usize, rng: &mut impl Rng) -> usize {
    let j = rng.gen_range(0..=2usize);
    s.saturating_sub(j).clamp(MIN_GEN_EXTENT, MAX_GEN_EXTENT)
}

/// Sample one example with difficulty drawn uniformly from `[l, u]`.
pub fn generate(spec: &TaskSpec, l: f64, u: f64, rng: &mut impl Rng) -> Result<ExamplePair> {
    if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&u) || l > u {
        return Err(Error::InvalidRange(format!(
            "difficulty bounds must satisfy 0 <= l <= u <= 1, got l={l}, u={u}"
        )));
    }
    let d = if l == u { l } else { rng.gen_range(l..=u) };
    let s = target_extent(d);
    let h = jittered_extent(s, rng);
    let w = jittered_extent(s, rng);
    let input = sample_input(spec, d, h, w, rng);
    let output = transform_oracle(spec, &input);
    ExamplePair::new(input, output)
}

fn sample_input(spec: &TaskSpec, d: f64, h: usize, w: usize, rng: &mut impl Rng) -> Grid {
    let palette = spec.palette();
    match spec.family {
        Family::RecolorMap | Family::BorderPaint => {
            // scattered colors from the task palette; count and density grow with d
            let n_colors = (1.0 + (6.0 * d).round()) as usize;
            let colors = &palette[..n_colors.min(palette.len())];
            let density = 0.3 + 0.5 * d;
            let cells = (0..h * w)
                .map(|_| {
                    if rng.gen_bool(density) {
                        colors[rng.gen_range(0..colors.len())]
                    } else {
                        0
                    }
                })
                .collect();
            Grid { h, w, cells }
        }
        Family::GravityDown => {
            let density = 0.15 + 0.35 * d;
            let n_colors = (1.0 + (5.0 * d).round()) as usize;
            let colors = &palette[..n_colors.min(palette.len())];
            let cells = (0..h * w)
                .map(|_| {
                    if rng.gen_bool(density) {
                        colors[rng.gen_range(0..colors.len())]
                    } else {
                        0
                    }
                })
                .collect();
            Grid { h, w, cells }
        }
        Family::FillEnclosed => {
            let mut grid = Grid {
                h,
                w,
                cells: vec![0; h * w],
            };
            let n_rings = 1 + (d * 4.0).floor() as usize;
            for _ in 0..n_rings {
                draw_ring(&mut grid, &palette, rng);
            }
            // light scatter away from the rings
            let noise = 0.05 * d;
            if noise > 0.0 {
                for cell in 0..h * w {
                    if grid.cells[cell] == 0 && rng.gen_bool(noise) {
                        grid.cells[cell] = palette[rng.gen_range(0..palette.len())];
                    }
                }
            }
            grid
        }
        Family::Denoise => {
            let mut grid = Grid {
                h,
                w,
                cells: vec![0; h * w],
            };
            let n_blocks = 1 + (d * 4.0).floor() as usize;
            for _ in 0..n_blocks {
                draw_block(&mut grid, &palette, rng);
            }
            // isolated specks the transformation must erase
            let n_noise = 1 + (d * 8.0).floor() as usize;
            let mut placed = 0;
            for _ in 0..n_noise * 20 {
                if placed == n_noise {
                    break;
                }
                let y = rng.gen_range(0..h);
                let x = rng.gen_range(0..w);
                if grid.get(y, x) == 0
                    && neighbors8(y, x, h, w).all(|(ny, nx)| grid.get(ny, nx) == 0)
                {
                    grid.set(y, x, palette[rng.gen_range(0..palette.len())]);
                    placed += 1;
                }
            }
            grid
        }
        Family::LargestObjectRecolor => {
            let mut grid = Grid {
                h,
                w,
                cells: vec![0; h * w],
            };
            let n_blocks = 2 + (d * 4.0).floor() as usize;
            for _ in 0..n_blocks {
                draw_block(&mut grid, &palette, rng);
            }
            if grid.cells.iter().all(|&c| c == 0) {
                // degenerate draw; guarantee at least one object
                grid.set(rng.gen_range(0..h), rng.gen_range(0..w), palette[0]);
            }
            grid
        }
    }
}

/// Hollow rectangle with an interior of at least one cell when it fits.
fn draw_ring(grid: &mut Grid, palette: &[u8], rng: &mut impl Rng) {
    let (h, w) = (grid.h, grid.w);
    let rh = rng.gen_range(3..=h.min(8));
    let rw = rng.gen_range(3..=w.min(8));
    let y0 = rng.gen_range(0..=h - rh);
    let x0 = rng.gen_range(0..=w - rw);
    let color = palette[rng.gen_range(0..palette.len())];
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            if y == y0 || y == y0 + rh - 1 || x == x0 || x == x0 + rw - 1 {
                grid.set(y, x, color);
            }
        }
    }
}

/// Solid rectangle, at least 2x2 so it never reads as isolated noise.
fn draw_block(grid: &mut Grid, palette: &[u8], rng: &mut impl Rng) {
    let (h, w) = (grid.h, grid.w);
    let bh = rng.gen_range(2..=h.min(5));
    let bw = rng.gen_range(2..=w.min(5));
    let y0 = rng.gen_range(0..=h - bh);
    let x0 = rng.gen_range(0..=w - bw);
    let color = palette[rng.gen_range(0..palette.len())];
    for y in y0..y0 + bh {
        for x in x0..x0 + bw {
            grid.set(y, x, color);
        }
    }
}

// ── Dataset files ───────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct RawPair {
    input: Vec<Vec<u8>>,
    output: Vec<Vec<u8>>,
}

/// Load a JSON array of `{"input", "output"}` matrices (the Re-ARC example
/// serialization) and validate every pair.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ExamplePair>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let raw: Vec<RawPair> =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut pairs = Vec::with_capacity(raw.len());
    for (index, rp) in raw.into_iter().enumerate() {
        let input = Grid::from_rows(&rp.input).map_err(|e| Error::Validation {
            index,
            reason: format!("bad input grid: {e}"),
        })?;
        let output = Grid::from_rows(&rp.output).map_err(|e| Error::Validation {
            index,
            reason: format!("bad output grid: {e}"),
        })?;
        let pair = ExamplePair::new(input, output).map_err(|e| Error::Validation {
            index,
            reason: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Write pairs in the same format `load_dataset` reads.
pub fn save_dataset(path: impl AsRef<Path>, pairs: &[ExamplePair]) -> Result<()> {
    let raw: Vec<RawPair> = pairs
        .iter()
        .map(|p| RawPair {
            input: p.input.to_rows(),
            output: p.output.to_rows(),
        })
        .collect();
    let text = serde_json::to_string(&raw)?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

// ── Throughput measurement ──────────────────────────────────────────────

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub family: String,
    pub pairs_generated: u64,
    pub elapsed_secs: f64,
    pub pairs_per_second: f64,
}

/// Count generate calls completed in a wall-clock window, single-threaded.
pub fn throughput_bench(spec: &TaskSpec, seconds: f64, l: f64, u: f64) -> Result<BenchReport> {
    if seconds <= 0.0 {
        return Err(Error::InvalidRange(format!(
            "bench window must be positive, got {seconds}"
        )));
    }
    let mut rng = rng_for(spec.seed, &[SeedPart::Str("bench"), SeedPart::Str(&spec.task_id)]);
    let window = Duration::from_secs_f64(seconds);
    let start = Instant::now();
    let mut count = 0u64;
    while start.elapsed() < window {
        generate(spec, l, u, &mut rng)?;
        count += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        family: spec.family.name().to_string(),
        pairs_generated: count,
        elapsed_secs: elapsed,
        pairs_per_second: count as f64 / elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn difficulty_zero_forces_smallest_grid() {
        let spec = TaskSpec::builtin(Family::RecolorMap, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let pair = generate(&spec, 0.0, 0.0, &mut rng).unwrap();
            assert_eq!((pair.input.height(), pair.input.width()), (4, 4));
            let distinct: std::collections::HashSet<u8> =
                pair.input.cells().iter().copied().collect();
            assert!(distinct.len() <= 3, "distinct colors: {distinct:?}");
        }
    }

    #[test]
    fn generate_rejects_inverted_bounds() {
        let spec = TaskSpec::builtin(Family::Denoise, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate(&spec, 0.6, 0.2, &mut rng),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn denoise_without_noise_is_fixed_point() {
        // one solid 2x2 block, nothing isolated
        let mut grid = Grid::filled(5, 5, 0).unwrap();
        for (y, x) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            grid.set(y, x, 4);
        }
        assert_eq!(denoise(&grid), grid);
    }

    #[test]
    fn fill_enclosed_matches_flood_fill_oracle() {
        // 6x6 ring of color 3 with hollow interior
        let rows = vec![
            vec![0, 0, 0, 0, 0, 0],
            vec![0, 3, 3, 3, 3, 0],
            vec![0, 3, 0, 0, 3, 0],
            vec![0, 3, 0, 0, 3, 0],
            vec![0, 3, 3, 3, 3, 0],
            vec![0, 0, 0, 0, 0, 0],
        ];
        let grid = Grid::from_rows(&rows).unwrap();
        let filled = fill_enclosed(&grid, 7);

        // independent recursive flood fill from the border
        fn visit(grid: &Grid, seen: &mut Vec<bool>, y: usize, x: usize) {
            if seen[y * grid.width() + x] || grid.get(y, x) != 0 {
                return;
            }
            seen[y * grid.width() + x] = true;
            if y > 0 {
                visit(grid, seen, y - 1, x);
            }
            if y + 1 < grid.height() {
                visit(grid, seen, y + 1, x);
            }
            if x > 0 {
                visit(grid, seen, y, x - 1);
            }
            if x + 1 < grid.width() {
                visit(grid, seen, y, x + 1);
            }
        }
        let mut seen = vec![false; grid.area()];
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                if y == 0 || y == grid.height() - 1 || x == 0 || x == grid.width() - 1 {
                    visit(&grid, &mut seen, y, x);
                }
            }
        }
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                let expect = if grid.get(y, x) == 0 && !seen[y * grid.width() + x] {
                    7
                } else {
                    grid.get(y, x)
                };
                assert_eq!(filled.get(y, x), expect, "cell ({y},{x})");
            }
        }
        // the four interior cells were enclosed
        assert_eq!(filled.get(2, 2), 7);
        assert_eq!(filled.get(3, 3), 7);
    }

    #[test]
    fn gravity_on_settled_grid_is_fixed_point() {
        let rows = vec![vec![0, 0], vec![1, 0], vec![2, 5]];
        let grid = Grid::from_rows(&rows).unwrap();
        assert_eq!(gravity_down(&grid), grid);
    }

    #[test]
    fn border_paint_on_1x1_grid() {
        let grid = Grid::filled(1, 1, 0).unwrap();
        let spec = TaskSpec::builtin(Family::BorderPaint, 9);
        let TransformParams::Border(color) = spec.transform_params() else {
            panic!("wrong params");
        };
        let out = transform_oracle(&spec, &grid);
        assert_eq!(out.get(0, 0), color);
    }

    #[test]
    fn recolor_twice_with_involution_is_identity() {
        // swap 1<->2, fix the rest: a permutation of order 2
        let map: [u8; NUM_COLORS] = [0, 2, 1, 3, 4, 5, 6, 7, 8, 9];
        let rows = vec![vec![0, 1, 2], vec![2, 1, 0], vec![3, 9, 1]];
        let grid = Grid::from_rows(&rows).unwrap();
        let twice = apply_color_map(&apply_color_map(&grid, &map), &map);
        assert_eq!(twice, grid);
    }

    #[test]
    fn largest_object_tie_breaks_to_first_in_scan_order() {
        let rows = vec![vec![1, 0, 2], vec![1, 0, 2], vec![0, 0, 0]];
        let grid = Grid::from_rows(&rows).unwrap();
        let out = recolor_largest_object(&grid, 5);
        assert_eq!(out.get(0, 0), 5);
        assert_eq!(out.get(1, 0), 5);
        assert_eq!(out.get(0, 2), 2);
    }

    #[test]
    fn largest_object_on_empty_grid_is_unchanged() {
        let grid = Grid::filled(3, 4, 0).unwrap();
        assert_eq!(recolor_largest_object(&grid, 5), grid);
    }

    #[test]
    fn generated_pairs_match_oracle_and_preserve_size() {
        for family in Family::ALL {
            let spec = TaskSpec::builtin(family, 42);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..200 {
                let pair = generate(&spec, 0.0, 1.0, &mut rng).unwrap();
                assert_eq!(pair.input.height(), pair.output.height());
                assert_eq!(pair.input.width(), pair.output.width());
                assert_eq!(
                    pair.output,
                    transform_oracle(&spec, &pair.input),
                    "family {family}"
                );
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = TaskSpec::builtin(Family::FillEnclosed, 3);
        let mut a = ChaCha8Rng::seed_from_u64(123);
        let mut b = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20 {
            assert_eq!(
                generate(&spec, 0.2, 0.7, &mut a).unwrap(),
                generate(&spec, 0.2, 0.7, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn expected_area_grows_with_difficulty() {
        let spec = TaskSpec::builtin(Family::GravityDown, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean_area = |lo: f64, rng: &mut ChaCha8Rng| -> f64 {
            (0..500)
                .map(|_| generate(&spec, lo, lo, rng).unwrap().input.area() as f64)
                .sum::<f64>()
                / 500.0
        };
        let low = mean_area(0.3, &mut rng);
        let high = mean_area(0.8, &mut rng);
        assert!(high > low, "area at 0.8 ({high}) <= area at 0.3 ({low})");
    }

    #[test]
    fn dataset_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.json");

        // trivial one-cell document
        std::fs::write(&path, r#"[{"input": [[0]], "output": [[1]]}]"#).unwrap();
        let pairs = load_dataset(&path).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].input.get(0, 0), 0);
        assert_eq!(pairs[0].output.get(0, 0), 1);

        // non-size-preserving pair names the offending index
        std::fs::write(
            &path,
            r#"[{"input": [[0,0],[0,0]], "output": [[0,0,0],[0,0,0],[0,0,0]]}]"#,
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Validation { index: 0, .. }) => {}
            other => panic!("expected validation error at index 0, got {other:?}"),
        }

        // color out of range
        std::fs::write(&path, r#"[{"input": [[12]], "output": [[0]]}]"#).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Validation { index: 0, .. })
        ));

        // malformed document reports a parse error
        std::fs::write(&path, "[{").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse(_))));

        // full round trip through save_dataset
        let spec = TaskSpec::builtin(Family::RecolorMap, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<ExamplePair> = (0..10)
            .map(|_| generate(&spec, 0.1, 0.9, &mut rng).unwrap())
            .collect();
        save_dataset(&path, &pairs).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), pairs);
    }

    #[test]
    fn bench_reports_positive_rate() {
        let spec = TaskSpec::builtin(Family::RecolorMap, 4);
        let report = throughput_bench(&spec, 0.05, 0.3, 0.5).unwrap();
        assert!(report.pairs_generated > 0);
        assert!(report.pairs_per_second > 0.0);
        assert_eq!(report.family, "recolor_map");
    }
}
