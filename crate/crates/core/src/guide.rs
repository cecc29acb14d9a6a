//! The user guide lives in `book/`. Including the chapters here turns every
//! fenced code block in the book into a doc-test, so `cargo test --doc`
//! keeps the book in sync with the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/velocity-form.md")]
pub mod velocity_form {}
#[doc = include_str!("../../../book/src/kernel-models.md")]
pub mod kernel_models {}
#[doc = include_str!("../../../book/src/prediction.md")]
pub mod prediction {}
#[doc = include_str!("../../../book/src/terminal.md")]
pub mod terminal_ingredients {}
#[doc = include_str!("../../../book/src/controller.md")]
pub mod controller_loop {}
#[doc = include_str!("../../../book/src/benchmark.md")]
pub mod benchmark {}
