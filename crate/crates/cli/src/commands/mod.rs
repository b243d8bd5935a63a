pub mod attend;
pub mod bench;
pub mod code;
pub mod gradcheck;
pub mod tools;
