fn main() {
    // Dense Hermitian eigensolves go through the system LAPACK (dsyevd /
    // zheevd); OpenBLAS ships both the BLAS and LAPACK entry points.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
