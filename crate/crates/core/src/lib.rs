//! Processing pipeline for Korean historical documents written in Hanja:
//! punctuation restoration, named entity tagging, translation and a
//! character glossary, served over HTTP or run in batch.

pub mod backends;
pub mod batch;
pub mod client;
pub mod config;
pub mod entities;
pub mod gateway;
pub mod glossary;
pub mod persistence;
pub mod pipeline;
pub mod punctuation;
pub mod text;
pub mod translation;
