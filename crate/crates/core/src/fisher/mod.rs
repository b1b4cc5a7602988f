//! PCA, diagonal-covariance GMM and Fisher Vector encoding.

mod fv;
mod gmm;
mod model_io;
mod pca;

pub use fv::{encode_fv, normalize_fv, FisherVector, FvOptions, DEFAULT_POSTERIOR_FLOOR};
pub use gmm::{posteriors, train_gmm, GmmFit, GmmModel, GmmParams};
pub use model_io::{
    decode_gmm, decode_pca, encode_gmm, encode_pca, read_gmm_file, read_pca_file, write_gmm_file,
    write_pca_file,
};
pub use pca::{apply_pca, train_pca, train_pca_with_spectrum, PcaModel};
