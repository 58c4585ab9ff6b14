//! Compares the three permanent routines on a Gaussian matrix and times
//! Ryser against the naive expansion.

use memboson::permanent::{benchmark, permanent_naive, permanent_parallel, permanent_ryser, write_bench_csv};
use memboson::{ComplexMatrix, RandomSeed, C64};
use rand_distr::{Distribution, StandardNormal};

fn main() -> memboson::Result<()> {
    let mut rng = RandomSeed(3).rng();
    let n = 7;
    let m = ComplexMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    });
    let naive = permanent_naive(&m)?;
    let ryser = permanent_ryser(&m)?;
    let par = permanent_parallel(&m, 4)?;
    println!("naive    {naive:.6}");
    println!("ryser    {ryser:.6}  (rel err {:.1e})", (ryser - naive).norm() / naive.norm());
    println!("parallel {par:.6}  (rel err {:.1e})", (par - naive).norm() / naive.norm());

    // all-ones matrix: Perm = n!
    let ones = ComplexMatrix::from_fn(6, 6, |_, _| C64::new(1.0, 0.0));
    println!("perm(J_6) = {}", permanent_ryser(&ones)?.re);

    let rows = benchmark(&[4, 6, 8, 10], 4, RandomSeed(4))?;
    write_bench_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
