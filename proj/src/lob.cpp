#include "hedgelab/lob.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hedgelab/common.hpp"

namespace hedgelab::lob {

void validate(const Order& order) {
  require(std::isfinite(order.price) && order.price > 0.0,
          "order " + std::to_string(order.id) + ": price must be positive");
  require(order.volume >= 1, "order " + std::to_string(order.id) + ": volume must be >= 1");
  require(order.expires_at > order.placed_at,
          "order " + std::to_string(order.id) + ": expires_at must follow placed_at");
}

OrderBook::OrderBook(double initial_price) : last_price_(initial_price) {
  require(std::isfinite(initial_price) && initial_price > 0.0, "initial price must be positive");
}

std::optional<double> OrderBook::best_bid() const {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<double> OrderBook::best_ask() const {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

template <class Book>
void OrderBook::match(Order& incoming, Book& opposite, std::vector<Fill>& fills) {
  const bool buying = incoming.side == Side::bid;
  while (incoming.volume > 0 && !opposite.empty()) {
    auto level = opposite.begin();
    const double level_price = level->first;
    const bool crosses = buying ? level_price <= incoming.price : level_price >= incoming.price;
    if (!crosses) break;
    Level& queue = level->second;
    while (incoming.volume > 0 && !queue.empty()) {
      Order& resting = queue.front();
      const std::int64_t qty = std::min(incoming.volume, resting.volume);
      fills.push_back(Fill{incoming.placed_at, level_price, qty,
                           buying ? incoming.id : resting.id,
                           buying ? resting.id : incoming.id});
      last_price_ = level_price;
      incoming.volume -= qty;
      resting.volume -= qty;
      if (resting.volume == 0) {
        queue.pop_front();
        --(buying ? ask_orders_ : bid_orders_);
      }
    }
    if (queue.empty()) opposite.erase(level);
  }
}

void OrderBook::rest(const Order& order) {
  if (order.side == Side::bid) {
    bids_[order.price].push_back(order);
    ++bid_orders_;
  } else {
    asks_[order.price].push_back(order);
    ++ask_orders_;
  }
  expiry_.push(Expiry{order.expires_at, order.id, order.side, order.price});
}

std::vector<Fill> OrderBook::insert(const Order& order, Mode mode) {
  validate(order);
  std::vector<Fill> fills;
  Order incoming = order;
  if (mode == Mode::continuous) {
    if (incoming.side == Side::bid) {
      match(incoming, asks_, fills);
    } else {
      match(incoming, bids_, fills);
    }
  }
  if (incoming.volume > 0) rest(incoming);
  return fills;
}

UncrossResult OrderBook::uncross(Step step, double reference_price) {
  UncrossResult result;
  if (bids_.empty() || asks_.empty() || bids_.begin()->first < asks_.begin()->first) {
    return result;
  }

  // Candidate clearing prices are the resting limit prices.
  std::vector<double> candidates;
  for (const auto& [price, level] : bids_) candidates.push_back(price);
  for (const auto& [price, level] : asks_) candidates.push_back(price);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto level_volume = [](const Level& level) {
    std::int64_t v = 0;
    for (const auto& o : level) v += o.volume;
    return v;
  };

  // demand(p): bid volume priced >= p; supply(p): ask volume priced <= p.
  const std::size_t n = candidates.size();
  std::vector<std::int64_t> demand(n, 0), supply(n, 0);
  {
    auto it = bids_.begin();  // descending
    std::int64_t cumulative = 0;
    for (std::size_t k = n; k-- > 0;) {
      while (it != bids_.end() && it->first >= candidates[k]) {
        cumulative += level_volume(it->second);
        ++it;
      }
      demand[k] = cumulative;
    }
  }
  {
    auto it = asks_.begin();  // ascending
    std::int64_t cumulative = 0;
    for (std::size_t k = 0; k < n; ++k) {
      while (it != asks_.end() && it->first <= candidates[k]) {
        cumulative += level_volume(it->second);
        ++it;
      }
      supply[k] = cumulative;
    }
  }

  std::size_t best = n;
  std::int64_t best_volume = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t v = std::min(demand[k], supply[k]);
    if (v <= 0) continue;
    if (best == n || v > best_volume) {
      best = k;
      best_volume = v;
      continue;
    }
    if (v == best_volume) {
      const double d_new = std::abs(candidates[k] - reference_price);
      const double d_old = std::abs(candidates[best] - reference_price);
      // Ascending scan: on an exact distance tie the earlier (lower) price stays.
      if (d_new < d_old) best = k;
    }
  }
  if (best == n) return result;

  const double clearing = candidates[best];
  std::int64_t remaining = best_volume;
  while (remaining > 0) {
    auto bid_level = bids_.begin();
    auto ask_level = asks_.begin();
    Order& buy = bid_level->second.front();
    Order& sell = ask_level->second.front();
    const std::int64_t qty = std::min({remaining, buy.volume, sell.volume});
    result.fills.push_back(Fill{step, clearing, qty, buy.id, sell.id});
    remaining -= qty;
    buy.volume -= qty;
    sell.volume -= qty;
    if (buy.volume == 0) {
      bid_level->second.pop_front();
      --bid_orders_;
      if (bid_level->second.empty()) bids_.erase(bid_level);
    }
    if (sell.volume == 0) {
      ask_level->second.pop_front();
      --ask_orders_;
      if (ask_level->second.empty()) asks_.erase(ask_level);
    }
  }
  last_price_ = clearing;
  result.opening_price = clearing;
  return result;
}

bool OrderBook::remove_resting(Side side, double price, OrderId id) {
  auto erase_from = [&](auto& book, std::size_t& count) {
    auto level = book.find(price);
    if (level == book.end()) return false;
    auto& queue = level->second;
    auto it = std::find_if(queue.begin(), queue.end(), [id](const Order& o) { return o.id == id; });
    if (it == queue.end()) return false;
    queue.erase(it);
    --count;
    if (queue.empty()) book.erase(level);
    return true;
  };
  return side == Side::bid ? erase_from(bids_, bid_orders_) : erase_from(asks_, ask_orders_);
}

std::size_t OrderBook::expire(Step now) {
  std::size_t removed = 0;
  while (!expiry_.empty() && expiry_.top().expires_at <= now) {
    const Expiry e = expiry_.top();
    expiry_.pop();
    // Orders already filled are simply absent.
    if (remove_resting(e.side, e.price, e.id)) ++removed;
  }
  return removed;
}

std::vector<Order> OrderBook::resting(Side side) const {
  std::vector<Order> out;
  if (side == Side::bid) {
    for (const auto& [price, level] : bids_) out.insert(out.end(), level.begin(), level.end());
  } else {
    for (const auto& [price, level] : asks_) out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

void write_fill_csv_header(std::ostream& out) {
  out << "step,price,volume,buy_order_id,sell_order_id\n";
}

void write_fill_csv(std::ostream& out, const std::vector<Fill>& fills) {
  for (const auto& f : fills) {
    out << f.step << ',' << format_double(f.price) << ',' << f.volume << ',' << f.buy_order_id
        << ',' << f.sell_order_id << '\n';
  }
}

}  // namespace hedgelab::lob
