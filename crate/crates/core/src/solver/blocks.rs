use crate::lcqp::{CompiledLcqp, RowKind};

/// Dual rows updated together in one coordinate step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub indices: Vec<usize>,
}

/// One block per hard-constraint and potential row, each with the box rows of
/// the targets it touches and its slack's nonnegativity row. Targets that no
/// row touches get a block of their own two box rows.
pub fn make_blocks(lcqp: &CompiledLcqp) -> Vec<Block> {
    let lay = lcqp.layout();
    let n_s = lay.n_slack();
    let mut touched = vec![false; lay.n_y];
    let mut blocks = Vec::with_capacity(lay.q + n_s + lay.n_y);
    for row in 0..lay.q + n_s {
        let mut indices = vec![row];
        if let RowKind::Potential(s) = lay.row_kind(row) {
            indices.extend(lay.slack_bound_row(s));
        }
        for (col, _) in lcqp.a().row(row) {
            if col >= n_s {
                let v = col - n_s;
                touched[v] = true;
                indices.push(lay.lower_row(v));
                indices.push(lay.upper_row(v));
            }
        }
        blocks.push(Block { indices });
    }
    for (v, _) in touched.iter().enumerate().filter(|(_, &t)| !t) {
        blocks.push(Block {
            indices: vec![lay.lower_row(v), lay.upper_row(v)],
        });
    }
    blocks
}

/// Block with its rows' nonzeros remapped onto the block's column set, so a
/// step needs no allocation or searching.
#[derive(Clone, Debug)]
pub(crate) struct PlannedBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// `row_ptr[k]..row_ptr[k + 1]` indexes `entries` for `rows[k]`.
    pub row_ptr: Vec<usize>,
    /// `(position in cols, coefficient)`.
    pub entries: Vec<(usize, f64)>,
}

impl PlannedBlock {
    pub fn new(lcqp: &CompiledLcqp, block: &Block) -> Self {
        let mut cols: Vec<usize> = block
            .indices
            .iter()
            .flat_map(|&r| lcqp.a().row(r).map(|(c, _)| c))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        let mut row_ptr = vec![0];
        let mut entries = Vec::new();
        for &r in &block.indices {
            for (c, a) in lcqp.a().row(r) {
                entries.push((cols.binary_search(&c).unwrap(), a));
            }
            row_ptr.push(entries.len());
        }
        PlannedBlock {
            rows: block.indices.clone(),
            cols,
            row_ptr,
            entries,
        }
    }

    pub fn row_entries(&self, k: usize) -> &[(usize, f64)] {
        &self.entries[self.row_ptr[k]..self.row_ptr[k + 1]]
    }
}

pub(crate) fn plan_blocks(lcqp: &CompiledLcqp) -> Vec<PlannedBlock> {
    make_blocks(lcqp)
        .iter()
        .map(|b| PlannedBlock::new(lcqp, b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GroundedModel, HingePotential};

    fn model(potentials: Vec<HingePotential>, n_y: usize) -> GroundedModel {
        GroundedModel {
            n_y,
            x_sy: vec![],
            n_g: 0,
            r: 1,
            w_sy: vec![1.0],
            potentials,
            constraints: vec![],
        }
    }

    #[test]
    fn linear_potential_block_has_four_rows() {
        let m = model(vec![HingePotential::over_targets([(0, 1.0)], -0.5, 1, 0)], 1);
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let blocks = make_blocks(&l);
        assert_eq!(blocks.len(), 1);
        let mut idx = blocks[0].indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn shared_targets_make_a_cover() {
        let m = model(
            vec![
                HingePotential::over_targets([(0, 1.0)], -0.5, 2, 0),
                HingePotential::over_targets([(0, -1.0)], 0.2, 2, 0),
            ],
            1,
        );
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let blocks = make_blocks(&l);
        assert_eq!(blocks.len(), 2);
        let lower = l.layout().lower_row(0);
        assert!(blocks.iter().all(|b| b.indices.contains(&lower)));
    }

    #[test]
    fn empty_model_gets_box_pairs() {
        let mut m = model(vec![], 3);
        m.r = 0;
        m.w_sy.clear();
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let blocks = make_blocks(&l);
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| b.indices.len() == 2));
    }
}
