//! Daily cash/gold/bitcoin allocation engine.
//!
//! The pipeline runs once per trading day:
//!
//! 1. [`trend`] builds MA/EMA trend lines and their slope signals.
//! 2. [`arima`] forecasts the next close of each risky asset.
//! 3. [`optimizer`] turns forecasts and trailing covariance into a Monte Carlo
//!    cloud of portfolios evaluated under proportional transaction costs, and
//!    picks the max-Sharpe point of its efficient frontier.
//! 4. [`blend`] mixes that ideal allocation with equal weights through the
//!    laziness coefficients.
//! 5. [`backtest`] executes the trade, books costs and keeps the ledger.

pub mod arima;
pub mod backtest;
pub mod blend;
pub mod error;
pub mod market_data;
pub mod optimizer;
pub mod synthetic;
pub mod trend;

pub use error::{Error, Result};
pub use market_data::{AlignedMarket, Asset, PriceSeries};
pub use optimizer::WeightVector;
