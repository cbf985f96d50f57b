#![allow(dead_code)]

pub mod grid;
