use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::csvfmt::sig9;
use crate::embed::{pca2, state_vectors, EmbeddingTable, TokenMode, VocabKey};
use crate::error::{Error, Result};
use crate::fourrooms::GridLayout;
use crate::metatest::Missing;
use crate::oracle::SuccessorMatrix;

pub const RESULTS_HEADER: &str =
    "seed,task_id,method,dim,meta_test_episodes,mean_return,std_return,lspi_iterations,wall_time_ms";
pub const PCA_HEADER: &str = "state,pc1,pc2,room_label";

/// Outcome of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub task_id: String,
    pub method: String,
    pub dim: usize,
    pub meta_test_episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub lspi_iterations: usize,
    /// Zero in deterministic runs.
    pub wall_time_ms: u64,
}

pub fn format_results(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.task_id,
            r.method,
            r.dim,
            r.meta_test_episodes,
            sig9(r.mean_return),
            sig9(r.std_return),
            r.lspi_iterations,
            r.wall_time_ms
        ));
    }
    out
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::input(
            "results file does not start with the expected header",
        ));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let err = |what: &str| Error::input(format!("results line {}: bad {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(err("field count"));
            }
            Ok(ResultRow {
                seed: f[0].parse().map_err(|_| err("seed"))?,
                task_id: f[1].to_string(),
                method: f[2].to_string(),
                dim: f[3].parse().map_err(|_| err("dim"))?,
                meta_test_episodes: f[4].parse().map_err(|_| err("meta_test_episodes"))?,
                mean_return: f[5].parse().map_err(|_| err("mean_return"))?,
                std_return: f[6].parse().map_err(|_| err("std_return"))?,
                lspi_iterations: f[7].parse().map_err(|_| err("lspi_iterations"))?,
                wall_time_ms: f[8].parse().map_err(|_| err("wall_time_ms"))?,
            })
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_file(path, &format_results(rows))
}

/// One navigable state projected onto two principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaRow {
    pub state: usize,
    pub pc1: f64,
    pub pc2: f64,
    pub room_label: String,
}

fn project(layout: &GridLayout, states: Vec<usize>, vectors: &DMatrix<f64>) -> Result<Vec<PcaRow>> {
    let pcs = pca2(vectors)?;
    Ok(states
        .into_iter()
        .enumerate()
        .map(|(i, state)| PcaRow {
            state,
            pc1: pcs[(i, 0)],
            pc2: pcs[(i, 1)],
            room_label: layout.label(state).to_string(),
        })
        .collect())
}

/// PCA of per-state embedding vectors over the navigable cells. Cells absent
/// from the table are an error, or are left out under [`Missing::Zero`].
pub fn embedding_pca(
    table: &EmbeddingTable,
    layout: &GridLayout,
    n_actions: usize,
    missing: Missing,
) -> Result<Vec<PcaRow>> {
    let seen = |s: usize| match table.token_mode() {
        TokenMode::State => table.input_vector(VocabKey::State(s)).is_some(),
        TokenMode::StateAction => (0..n_actions).any(|a| table.token_vector(s, a).is_some()),
    };
    let states: Vec<usize> = layout
        .navigable_cells()
        .into_iter()
        .filter(|&s| missing == Missing::Error || seen(s))
        .collect();
    let vectors = state_vectors(table, &states, n_actions)?;
    project(layout, states, &vectors)
}

/// PCA of successor rows, averaged over actions, over the navigable cells.
pub fn sr_pca(sr: &SuccessorMatrix, layout: &GridLayout) -> Result<Vec<PcaRow>> {
    let states = layout.navigable_cells();
    let all = sr.state_rows();
    let vectors = DMatrix::from_fn(states.len(), all.ncols(), |i, k| all[(states[i], k)]);
    project(layout, states, &vectors)
}

pub fn format_pca(rows: &[PcaRow]) -> String {
    let mut out = String::from(PCA_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.state,
            sig9(r.pc1),
            sig9(r.pc2),
            r.room_label
        ));
    }
    out
}

pub fn emit_pca(rows: &[PcaRow], path: &Path) -> Result<()> {
    write_file(path, &format_pca(rows))
}
