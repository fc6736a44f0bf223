#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <vector>

namespace hedgelab::lob {

enum class Side { bid, ask };

// continuous: match on arrival. preopen: rest without matching until uncross().
enum class Mode { continuous, preopen };

using OrderId = std::uint64_t;
using Step = std::int64_t;

struct Order {
  OrderId id = 0;
  Side side = Side::bid;
  double price = 0.0;
  std::int64_t volume = 1;
  Step placed_at = 0;
  Step expires_at = 1;
};

struct Fill {
  Step step = 0;
  double price = 0.0;
  std::int64_t volume = 0;
  OrderId buy_order_id = 0;
  OrderId sell_order_id = 0;

  friend bool operator==(const Fill&, const Fill&) = default;
};

struct UncrossResult {
  std::vector<Fill> fills;
  std::optional<double> opening_price;

  [[nodiscard]] bool no_op() const { return fills.empty(); }
};

// Throws ValidationError when price/volume/expiry violate the order invariants.
void validate(const Order& order);

// Single-instrument limit order book with price-time priority.
//
// Prices are continuous (no tick grid). A trade executes at the resting
// order's price. Orders carry an expiry step and are dropped by expire().
// Not thread-safe; one book per thread.
class OrderBook {
 public:
  explicit OrderBook(double initial_price = 1.0);

  std::vector<Fill> insert(const Order& order, Mode mode = Mode::continuous);

  // Call auction over everything resting: picks the price with the largest
  // executable volume, ties broken toward `reference_price` and then toward
  // the lower price, and executes all crossing volume there.
  UncrossResult uncross(Step step, double reference_price = 1.0);

  // Removes every order with expires_at <= now. Returns the number removed.
  std::size_t expire(Step now);

  [[nodiscard]] double last_price() const { return last_price_; }
  [[nodiscard]] std::optional<double> best_bid() const;
  [[nodiscard]] std::optional<double> best_ask() const;
  [[nodiscard]] std::size_t bid_count() const { return bid_orders_; }
  [[nodiscard]] std::size_t ask_count() const { return ask_orders_; }

  // Resting orders of one side in priority order.
  [[nodiscard]] std::vector<Order> resting(Side side) const;

 private:
  using Level = std::deque<Order>;

  struct Expiry {
    Step expires_at;
    OrderId id;
    Side side;
    double price;
    bool operator>(const Expiry& o) const {
      return expires_at != o.expires_at ? expires_at > o.expires_at : id > o.id;
    }
  };

  template <class Book>
  void match(Order& incoming, Book& opposite, std::vector<Fill>& fills);
  void rest(const Order& order);
  bool remove_resting(Side side, double price, OrderId id);

  std::map<double, Level, std::greater<>> bids_;
  std::map<double, Level, std::less<>> asks_;
  std::priority_queue<Expiry, std::vector<Expiry>, std::greater<>> expiry_;
  std::size_t bid_orders_ = 0;
  std::size_t ask_orders_ = 0;
  double last_price_;
};

// Writes fills as CSV rows: step,price,volume,buy_order_id,sell_order_id.
void write_fill_csv_header(std::ostream& out);
void write_fill_csv(std::ostream& out, const std::vector<Fill>& fills);

}  // namespace hedgelab::lob
