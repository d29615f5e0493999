//! Parameter and multiply-add counts of the classifier family.

use dualkws::nn::{count_madd, count_params, NetConfig};

fn main() -> dualkws::Result<()> {
    println!("{:<10} {:>12} {:>14}", "config", "params", "MAdd");
    for ds in [false, true] {
        for div in [1, 2, 4, 8] {
            let c = NetConfig::resnet18(div, ds, 4, (120, 82));
            let name = format!("{}{}", if div == 1 { "full".into() } else { format!("1/{div}") }, if ds { "-DS" } else { "" });
            println!("{name:<10} {:>12} {:>14}", count_params(&c)?, count_madd(&c)?);
        }
    }
    Ok(())
}
