//! Genealogical structure of a state: ultrametric checks, tree
//! reconstruction and Newick text, subsampled marked distance matrices,
//! ancestral lineages and fragment masses.

mod ancestry;
mod matrix;
mod sampling;
mod tree;
mod ultrametric;

pub use ancestry::{ancestor_level, fragment_masses, FragmentMasses, Root};
pub use matrix::{DistMatrix, Genealogy};
pub use sampling::{sample_marked_matrices, MarkedMatrixSample};
pub use tree::{parse_newick, ultrametric_to_tree, GenealogyTree, NewickNode, TreeNode};
pub use ultrametric::{check_ultrametric, default_tol, UltrametricReport, Violation};
