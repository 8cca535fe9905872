//! Rule-constrained trade execution and cash/share accounting.
//!
//! Money, prices and share counts are fixed-point integers so that value
//! conservation at fills and the telescoping of daily rewards hold
//! exactly. Prices carry 6 decimals, shares 8, and money is held in the
//! product unit (1e-14 currency), so `shares * price` never rounds.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Action, TradingDecision};

const PRICE_SCALE: i128 = 1_000_000;
const SHARE_SCALE: i128 = 100_000_000;
const MONEY_SCALE: i128 = PRICE_SCALE * SHARE_SCALE;

/// Minimum cash share of total value that must remain after a BUY, in percent.
pub const CASH_RESERVE_PCT: i128 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_f64(v: f64) -> Money {
        Money((v * MONEY_SCALE as f64).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MONEY_SCALE as f64
    }

    pub fn raw(self) -> i128 {
        self.0
    }

    fn mul_ratio(self, num: i128, den: i128) -> Money {
        Money(self.0 * num / den)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.to_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(i128);

impl Price {
    pub fn from_f64(v: f64) -> Result<Price, PortfolioError> {
        let p = (v * PRICE_SCALE as f64).round() as i128;
        if !v.is_finite() || p <= 0 {
            return Err(PortfolioError::NonPositivePrice(v));
        }
        Ok(Price(p))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / PRICE_SCALE as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shares(i128);

impl Shares {
    pub const ZERO: Shares = Shares(0);

    pub fn from_f64(v: f64) -> Shares {
        Shares((v * SHARE_SCALE as f64).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SHARE_SCALE as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    fn value_at(self, price: Price) -> Money {
        Money(self.0 * price.0)
    }

    /// Largest share quantity whose cost does not exceed `budget`.
    fn affordable(budget: Money, price: Price, lot: i128) -> Shares {
        if budget.0 <= 0 {
            return Shares::ZERO;
        }
        let units = budget.0 / price.0;
        Shares(units - units % lot)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PortfolioError {
    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("initial capital must be positive, got {0}")]
    NonPositiveCapital(f64),
    #[error("invalid decision: {0:?}")]
    InvalidDecision(TradingDecision),
}

/// Whether fills may use fractional shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareMode {
    #[default]
    Fractional,
    Whole,
}

impl ShareMode {
    fn lot(self) -> i128 {
        match self {
            ShareMode::Fractional => 1,
            ShareMode::Whole => SHARE_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    cash: Money,
    shares: Shares,
    avg_purchase_price: Option<f64>,
    initial_capital: Money,
    #[serde(default)]
    share_mode: ShareMode,
}

/// Non-fatal outcomes of applying the trading rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleEvent {
    /// BUY shrunk to keep the cash reserve.
    CashReserveClamped { requested_pct: u8, executed_pct: f64 },
    /// BUY impossible without breaching the cash reserve.
    CashReserveBlocked { requested_pct: u8 },
    NoPositionToSell { requested_pct: u8 },
    /// SELL larger than the position; the whole position was sold.
    SellCappedAtPosition { requested_pct: u8, executed_pct: f64 },
    /// Target amount below one tradable lot.
    BelowMinimumLot { action: Action, requested_pct: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub date: NaiveDate,
    pub action: Action,
    pub shares: f64,
    pub price: f64,
    pub requested_pct: u8,
    pub executed_pct: f64,
    pub cash_after: f64,
    pub shares_after: f64,
    /// Exact traded value, `shares * price`.
    pub notional: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub portfolio: Portfolio,
    pub fill: Option<Fill>,
    pub events: Vec<RuleEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSnapshot {
    pub date: NaiveDate,
    pub share_price: f64,
    pub shares: f64,
    pub cash: f64,
    pub avg_purchase_price: f64,
    pub total_value: f64,
    pub cash_percentage: f64,
    pub unrealized_pl: f64,
    pub unrealized_pct: f64,
    /// Exact total value used for reward arithmetic.
    pub total_exact: Money,
}

impl Portfolio {
    pub fn new(initial_capital: f64) -> Result<Portfolio, PortfolioError> {
        Self::with_mode(initial_capital, ShareMode::Fractional)
    }

    pub fn with_mode(initial_capital: f64, share_mode: ShareMode) -> Result<Portfolio, PortfolioError> {
        let capital = Money::from_f64(initial_capital);
        if !initial_capital.is_finite() || capital.0 <= 0 {
            return Err(PortfolioError::NonPositiveCapital(initial_capital));
        }
        Ok(Portfolio {
            cash: capital,
            shares: Shares::ZERO,
            avg_purchase_price: None,
            initial_capital: capital,
            share_mode,
        })
    }

    /// Builds a portfolio with an existing position, for tests and replays.
    pub fn from_parts(
        cash: f64,
        shares: f64,
        avg_purchase_price: f64,
        initial_capital: f64,
    ) -> Result<Portfolio, PortfolioError> {
        let mut p = Portfolio::new(initial_capital)?;
        p.cash = Money::from_f64(cash);
        p.shares = Shares::from_f64(shares);
        p.avg_purchase_price = (!p.shares.is_zero()).then_some(avg_purchase_price);
        Ok(p)
    }

    pub fn cash(&self) -> Money {
        self.cash
    }

    pub fn shares(&self) -> Shares {
        self.shares
    }

    pub fn avg_purchase_price(&self) -> Option<f64> {
        self.avg_purchase_price
    }

    pub fn initial_capital(&self) -> Money {
        self.initial_capital
    }

    pub fn total_value(&self, price: Price) -> Money {
        self.cash + self.shares.value_at(price)
    }

    /// Fresh portfolio with the same capital and share mode.
    pub fn reset(&self) -> Portfolio {
        Portfolio {
            cash: self.initial_capital,
            shares: Shares::ZERO,
            avg_purchase_price: None,
            initial_capital: self.initial_capital,
            share_mode: self.share_mode,
        }
    }

    pub fn execute(
        &self,
        date: NaiveDate,
        decision: &TradingDecision,
        price: f64,
    ) -> Result<ExecutionOutcome, PortfolioError> {
        let px = Price::from_f64(price)?;
        if !decision.is_valid() {
            return Err(PortfolioError::InvalidDecision(decision.clone()));
        }
        let requested_pct = decision.position_size;
        let total = self.total_value(px);
        let target = total.mul_ratio(i128::from(requested_pct), 100);
        let lot = self.share_mode.lot();
        let mut next = self.clone();
        let mut events = Vec::new();

        let qty = match decision.action {
            Action::Hold => {
                return Ok(ExecutionOutcome {
                    portfolio: next,
                    fill: None,
                    events,
                })
            }
            Action::Buy => {
                // Value is conserved at the fill, so the reserve is measured
                // against the pre-trade total.
                let reserve = Money((total.0 * CASH_RESERVE_PCT + 99) / 100);
                let headroom = self.cash - reserve;
                if headroom.0 <= 0 {
                    events.push(RuleEvent::CashReserveBlocked { requested_pct });
                    return Ok(ExecutionOutcome {
                        portfolio: next,
                        fill: None,
                        events,
                    });
                }
                let budget = target.min(headroom);
                let qty = Shares::affordable(budget, px, lot);
                if qty.is_zero() {
                    events.push(RuleEvent::BelowMinimumLot {
                        action: Action::Buy,
                        requested_pct,
                    });
                    return Ok(ExecutionOutcome {
                        portfolio: next,
                        fill: None,
                        events,
                    });
                }
                if budget < target {
                    events.push(RuleEvent::CashReserveClamped {
                        requested_pct,
                        executed_pct: pct_of(qty.value_at(px), total),
                    });
                }
                let new_shares = Shares(self.shares.0 + qty.0);
                let old_cost = self.avg_purchase_price.unwrap_or(0.0) * self.shares.to_f64();
                next.avg_purchase_price =
                    Some((old_cost + qty.to_f64() * px.to_f64()) / new_shares.to_f64());
                next.shares = new_shares;
                next.cash = self.cash - qty.value_at(px);
                qty
            }
            Action::Sell => {
                if self.shares.is_zero() {
                    events.push(RuleEvent::NoPositionToSell { requested_pct });
                    return Ok(ExecutionOutcome {
                        portfolio: next,
                        fill: None,
                        events,
                    });
                }
                let wanted = Shares::affordable(target, px, lot);
                let qty = if wanted >= self.shares {
                    if wanted > self.shares {
                        events.push(RuleEvent::SellCappedAtPosition {
                            requested_pct,
                            executed_pct: pct_of(self.shares.value_at(px), total),
                        });
                    }
                    self.shares
                } else {
                    wanted
                };
                if qty.is_zero() {
                    events.push(RuleEvent::BelowMinimumLot {
                        action: Action::Sell,
                        requested_pct,
                    });
                    return Ok(ExecutionOutcome {
                        portfolio: next,
                        fill: None,
                        events,
                    });
                }
                next.shares = Shares(self.shares.0 - qty.0);
                next.cash = self.cash + qty.value_at(px);
                if next.shares.is_zero() {
                    next.avg_purchase_price = None;
                }
                qty
            }
        };

        let notional = qty.value_at(px);
        let fill = Fill {
            date,
            action: decision.action,
            shares: qty.to_f64(),
            price: px.to_f64(),
            requested_pct,
            executed_pct: pct_of(notional, total),
            cash_after: next.cash.to_f64(),
            shares_after: next.shares.to_f64(),
            notional,
        };
        Ok(ExecutionOutcome {
            portfolio: next,
            fill: Some(fill),
            events,
        })
    }

    pub fn mark_to_market(
        &self,
        date: NaiveDate,
        price: f64,
    ) -> Result<PortfolioSnapshot, PortfolioError> {
        let px = Price::from_f64(price)?;
        let total = self.total_value(px);
        let share_price = px.to_f64();
        let shares = self.shares.to_f64();
        let (avg, unrealized_pl, unrealized_pct) = match self.avg_purchase_price {
            Some(avg) if !self.shares.is_zero() => (
                avg,
                (share_price - avg) * shares,
                (share_price - avg) / avg * 100.0,
            ),
            _ => (0.0, 0.0, 0.0),
        };
        Ok(PortfolioSnapshot {
            date,
            share_price,
            shares,
            cash: self.cash.to_f64(),
            avg_purchase_price: avg,
            total_value: total.to_f64(),
            cash_percentage: pct_of(self.cash, total),
            unrealized_pl,
            unrealized_pct,
            total_exact: total,
        })
    }
}

fn pct_of(part: Money, whole: Money) -> f64 {
    part.0 as f64 / whole.0 as f64 * 100.0
}

/// Change in total value between two consecutive snapshots.
pub fn daily_reward(prev: &PortfolioSnapshot, cur: &PortfolioSnapshot) -> Money {
    cur.total_exact - prev.total_exact
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 6, n).unwrap()
    }

    fn buy(p: u8) -> TradingDecision {
        TradingDecision {
            action: Action::Buy,
            position_size: p,
            explanation: "x".into(),
        }
    }

    fn sell(p: u8) -> TradingDecision {
        TradingDecision {
            action: Action::Sell,
            ..buy(p)
        }
    }

    #[test]
    fn plain_buy() {
        let p = Portfolio::new(10_000.0).unwrap();
        let out = p.execute(day(1), &buy(10), 100.0).unwrap();
        assert!(out.events.is_empty());
        let fill = out.fill.unwrap();
        assert_eq!(fill.shares, 10.0);
        assert_eq!(fill.executed_pct, 10.0);
        assert_eq!(out.portfolio.cash().to_f64(), 9_000.0);
        let snap = out.portfolio.mark_to_market(day(1), 100.0).unwrap();
        assert_eq!(snap.cash_percentage, 90.0);
        assert_eq!(out.portfolio.avg_purchase_price(), Some(100.0));
    }

    #[test]
    fn buy_clamped_by_cash_reserve() {
        let p = Portfolio::from_parts(1_500.0, 85.0, 100.0, 10_000.0).unwrap();
        let out = p.execute(day(1), &buy(10), 100.0).unwrap();
        let fill = out.fill.unwrap();
        assert_eq!(fill.notional.to_f64(), 500.0);
        assert_eq!(out.portfolio.cash().to_f64(), 1_000.0);
        assert_eq!(
            out.events,
            vec![RuleEvent::CashReserveClamped {
                requested_pct: 10,
                executed_pct: 5.0
            }]
        );
        let snap = out.portfolio.mark_to_market(day(1), 100.0).unwrap();
        assert_eq!(snap.cash_percentage, 10.0);
    }

    #[test]
    fn clamp_matches_brute_force_spend_grid() {
        // Largest spend on a 1-cent grid keeping cash >= 10% of total.
        let (cash, total, target) = (1_500.0_f64, 10_000.0_f64, 1_000.0_f64);
        let best = (0..=100_000)
            .map(|c| c as f64 / 100.0)
            .filter(|s| *s <= target && cash - s >= 0.10 * total - 1e-9)
            .fold(0.0_f64, f64::max);
        let p = Portfolio::from_parts(cash, 85.0, 100.0, total).unwrap();
        let out = p.execute(day(1), &buy(10), 100.0).unwrap();
        assert!((out.fill.unwrap().notional.to_f64() - best).abs() < 0.01);
    }

    #[test]
    fn buy_blocked_at_reserve() {
        let p = Portfolio::from_parts(1_000.0, 90.0, 100.0, 10_000.0).unwrap();
        let out = p.execute(day(1), &buy(5), 100.0).unwrap();
        assert!(out.fill.is_none());
        assert_eq!(out.events, vec![RuleEvent::CashReserveBlocked { requested_pct: 5 }]);
        assert_eq!(out.portfolio, p);
    }

    #[test]
    fn sell_without_position() {
        let p = Portfolio::new(10_000.0).unwrap();
        let out = p.execute(day(1), &sell(5), 100.0).unwrap();
        assert!(out.fill.is_none());
        assert_eq!(out.events, vec![RuleEvent::NoPositionToSell { requested_pct: 5 }]);
    }

    #[test]
    fn sell_partial_and_capped() {
        let p = Portfolio::from_parts(9_000.0, 10.0, 100.0, 10_000.0).unwrap();
        let out = p.execute(day(1), &sell(3), 100.0).unwrap();
        assert_eq!(out.fill.as_ref().unwrap().shares, 3.0);
        assert_eq!(out.portfolio.avg_purchase_price(), Some(100.0));
        assert_eq!(out.portfolio.cash().to_f64(), 9_300.0);

        let out = p.execute(day(1), &sell(10), 50.0).unwrap();
        assert_eq!(out.fill.unwrap().shares, 10.0);
        assert!(out.portfolio.shares().is_zero());
        assert_eq!(out.portfolio.avg_purchase_price(), None);
        assert!(matches!(out.events[0], RuleEvent::SellCappedAtPosition { .. }));
    }

    #[test]
    fn hold_is_noop_and_bad_price_rejected() {
        let p = Portfolio::new(10_000.0).unwrap();
        let out = p.execute(day(1), &TradingDecision::hold("w"), 100.0).unwrap();
        assert_eq!(out.portfolio, p);
        assert!(out.fill.is_none() && out.events.is_empty());
        assert!(matches!(
            p.execute(day(1), &buy(1), 0.0),
            Err(PortfolioError::NonPositivePrice(_))
        ));
        assert!(p.mark_to_market(day(1), -1.0).is_err());
        assert!(Portfolio::new(0.0).is_err());
    }

    #[test]
    fn whole_share_mode() {
        let p = Portfolio::with_mode(10_000.0, ShareMode::Whole).unwrap();
        let out = p.execute(day(1), &buy(10), 300.0).unwrap();
        assert_eq!(out.fill.unwrap().shares, 3.0);
        let out = p.execute(day(1), &buy(1), 300.0).unwrap();
        assert!(out.fill.is_none());
    }

    #[test]
    fn snapshot_arithmetic() {
        let p = Portfolio::from_parts(9_000.0, 10.0, 100.0, 10_000.0).unwrap();
        let s = p.mark_to_market(day(2), 110.0).unwrap();
        assert_eq!(s.total_value, 10_100.0);
        assert!((s.unrealized_pl - 100.0).abs() < 1e-9);
        assert!((s.unrealized_pct - 10.0).abs() < 1e-9);
        assert_eq!(format!("{:.2}", s.cash_percentage), "89.11");

        let empty = Portfolio::new(5_000.0).unwrap().mark_to_market(day(2), 3.0).unwrap();
        assert_eq!((empty.unrealized_pl, empty.unrealized_pct), (0.0, 0.0));
    }

    #[test]
    fn sample_position_scale() {
        // 344.10 unrealized on a 5.63% gain implies a cost basis near 6112.
        let avg = 100.0;
        let shares = 344.10 / 5.63;
        let price = avg * 1.0563;
        let p = Portfolio::from_parts(4_000.0, shares, avg, 10_000.0).unwrap();
        let s = p.mark_to_market(day(2), price).unwrap();
        assert_eq!(format!("{:.2}", s.unrealized_pl), "344.10");
        assert_eq!(format!("{:.2}", s.unrealized_pct), "5.63");
        assert!((avg * shares - 6_112.0).abs() < 1.0);
    }

    #[test]
    fn rewards() {
        let p = Portfolio::from_parts(9_000.0, 10.0, 100.0, 10_000.0).unwrap();
        let a = p.mark_to_market(day(1), 100.0).unwrap();
        let b = p.mark_to_market(day(2), 110.0).unwrap();
        assert_eq!(daily_reward(&a, &b).to_f64(), 100.0);
        assert_eq!(daily_reward(&a, &a), Money::ZERO);
    }

    proptest! {
        #[test]
        fn fills_conserve_value_and_rewards_telescope(
            steps in proptest::collection::vec((0u8..3, 1u8..=10, 1.0f64..500.0), 1..60)
        ) {
            let mut p = Portfolio::new(10_000.0).unwrap();
            let mut prev = p.mark_to_market(day(1), 100.0).unwrap();
            let start = prev.total_exact;
            let mut rewards = Money::ZERO;
            for (i, (a, size, price)) in steps.into_iter().enumerate() {
                let d = match a { 0 => buy(size), 1 => sell(size), _ => TradingDecision::hold("h") };
                let px = Price::from_f64(price).unwrap();
                let before = p.total_value(px);
                let out = p.execute(day(1), &d, price).unwrap();
                prop_assert_eq!(out.portfolio.total_value(px), before);
                if d.action == Action::Buy && out.fill.is_some() {
                    prop_assert!(out.portfolio.cash().raw() * 100 >= before.raw() * CASH_RESERVE_PCT);
                }
                p = out.portfolio;
                prop_assert!(p.cash() >= Money::ZERO && p.shares() >= Shares::ZERO);
                let cur = p.mark_to_market(day(1) + chrono::Days::new(i as u64 + 1), price).unwrap();
                rewards = rewards + daily_reward(&prev, &cur);
                prev = cur;
            }
            prop_assert_eq!(rewards, prev.total_exact - start);
        }
    }
}
