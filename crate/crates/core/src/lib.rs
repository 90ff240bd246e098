pub mod asm;
pub mod cli;
pub mod isa;
pub mod kernels;
pub mod litmus;
pub mod machcfg;
pub mod vm;
