pub mod contact;
pub mod heat;
pub mod mesh;
