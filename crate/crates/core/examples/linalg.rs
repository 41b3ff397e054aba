//! Generators, restricted determinants, the directed matrix-tree identity
//! and the M-matrix criteria.

use nalgebra::{DMatrix, DVector};
use starvrjp::fixtures::four_vertex;
use starvrjp::linalg::{enumerate_rooted_trees, inverse_nonnegative, eigen_positive_stable, restricted_determinant, tilted_generator, tree_determinant, Subspace};
use starvrjp::manifold::project_to_manifold;
use starvrjp::measures::m_matrix_battery;

fn main() -> starvrjp::Result<()> {
    let g = four_vertex();
    let sys = g.system();
    let p = project_to_manifold(sys, &DVector::from_vec(vec![0.2, 0.1, -0.5, 0.2]))?.point;
    let (wu, k) = tilted_generator(sys, &p.h);
    let det_h0 = restricted_determinant(&-&k, &sys.star, Subspace::H0);
    let t = tree_determinant(sys, &p.h);
    println!("det on H0 of -K^u = {det_h0:.10}");
    println!("N * tree determinant = {:.10} (root spread {:.1e})", g.n() as f64 * t.value, t.spread);
    println!("rooted spanning trees = {:.10}", enumerate_rooted_trees(&wu.w, 0));

    let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -0.5, 1.5, -0.7, -0.3, -0.2, 1.0]);
    println!("Z-matrix: positive stable {}, nonnegative inverse {}", eigen_positive_stable(&m), inverse_nonnegative(&m));
    println!("M-matrix battery: {} disagreements in 1000 matrices", m_matrix_battery(1000, 8, 3));
    Ok(())
}
