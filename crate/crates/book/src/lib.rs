//! Holds no code. mdbook cannot run listings that depend on workspace
//! crates, so each chapter is included here and `cargo test --doc` checks
//! its Rust blocks.

macro_rules! chapter {
    ($m:ident, $file:literal) => {
        #[cfg(doctest)]
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        mod $m {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(data, "data.md");
chapter!(model, "model.md");
chapter!(importance, "importance.md");
chapter!(influence, "influence.md");
chapter!(analytics, "analytics.md");
chapter!(service, "service.md");
chapter!(cli, "cli.md");
