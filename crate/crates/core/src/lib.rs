pub mod config;
pub mod controller;
pub mod cooccur;
pub mod corpus;
pub mod gen;
pub mod index;
pub mod scheduler;
pub mod sim;
