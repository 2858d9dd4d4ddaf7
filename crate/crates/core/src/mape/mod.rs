//! Multi-scale adaptive patch embedding: a bank of native kernels, nearest
//! kernel selection, and pseudo-inverse resizing to any target patch size.

mod bank;
mod pinv;
mod resize;
mod resize_matrix;

pub use bank::{
    embed_at_scale, embed_at_scale_with, nearest_index, select_kernel, select_kernel_with, KernelBank,
    DEFAULT_BANK_SIZES,
};
pub use pinv::{pinv, RCOND};
pub use resize::{kernel_resizers, pi_resize, resize_kernel, resize_operator, BilinearResize, KernelResizer, PiResize};
pub use resize_matrix::{build_resize_matrix, ResizeMatrix};
