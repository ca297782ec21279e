//! Univariate and structural kernels.

pub mod structural;
pub mod theta;
pub mod univariate;

pub use structural::{
    build_all, build_structural_kernel, collection_constants, kernel_norms, norm1_bound, norm2_bound,
    CollectionConstants, KernelField,
};
pub use theta::{enumerate_partitions, givens_rotation, rotation_planes, Partition, ThetaPoint, DEFAULT_ETA};
pub use univariate::UnivariateKernel;
