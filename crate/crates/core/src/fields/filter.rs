use super::{Grid, VelocityField};
use crate::error::{Error, Result};

/// Face-averaging filter onto a grid coarser by `factor`.
///
/// Each coarse face value is the mean of the `factor` fine face values lying
/// on that coarse face. The coarse flux through a coarse cell boundary is then
/// the sum of the fine fluxes, so divergence-free fine fields map to
/// divergence-free coarse fields.
pub fn face_average(fine: &VelocityField, factor: usize) -> Result<VelocityField> {
    let nf = fine.grid().n();
    if factor < 2 || nf % factor != 0 {
        return Err(Error::Config(format!(
            "coarsening factor {factor} must be >= 2 and divide grid size {nf}"
        )));
    }
    let coarse_grid = Grid::new(nf / factor)?;
    let nc = coarse_grid.n();
    let fg = fine.grid();
    let inv = 1.0 / factor as f64;
    let mut out = VelocityField::zeros(coarse_grid);
    for jc in 0..nc {
        for ic in 0..nc {
            // Fine face index coinciding with the coarse right/top face.
            let edge = (ic + 1) * factor - 1;
            let edge_y = (jc + 1) * factor - 1;
            let mut su = 0.0;
            let mut sv = 0.0;
            for s in 0..factor {
                su += fine.u[fg.idx(edge, jc * factor + s)];
                sv += fine.v[fg.idx(ic * factor + s, edge_y)];
            }
            let k = coarse_grid.idx(ic, jc);
            out.u[k] = su * inv;
            out.v[k] = sv * inv;
        }
    }
    Ok(out)
}
