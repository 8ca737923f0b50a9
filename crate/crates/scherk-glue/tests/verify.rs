use scherk_glue::verify::{format_table, run_suite, SuiteOptions};

#[test]
fn invariant_suite_passes_and_is_reproducible() {
    let options = SuiteOptions { seed: 7, ..SuiteOptions::default() };
    let a = run_suite(&options);
    println!("{}", format_table(&a));
    assert!(a.iter().all(|o| o.passed), "{}", format_table(&a));
    assert_eq!(a, run_suite(&options));
}
