#pragma once

// Random input generators shared by the unit and acceptance suites.

#include <random>
#include <string>

#include "rap/graph/value.hpp"
#include "rap/wire/frame.hpp"

namespace rap::testing {

class ValueGen {
 public:
  explicit ValueGen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  std::string text(int max_len = 12) {
    static const char* pieces[] = {"a", "b", "z", "_", " ", "0", "9", "$", "\"", "\\",
                                   "\n", "\xc3\xa9", "\xe2\x82\xac", "\xf0\x9f\xa4\x96", "/"};
    std::string s;
    int n = uniform(0, max_len);
    for (int i = 0; i < n; ++i) s += pieces[uniform(0, 14)];
    return s;
  }

  std::string name() {
    std::string s;
    int segs = uniform(1, 3);
    for (int i = 0; i < segs; ++i) {
      s += '/';
      int n = uniform(1, 6);
      for (int k = 0; k < n; ++k) s += "abcxyz_019"[uniform(0, 9)];
    }
    return s;
  }

  std::int64_t integer(bool json_safe) {
    switch (uniform(0, 4)) {
      case 0: return uniform(-30, 30);
      case 1: return uniform(-70000, 70000);
      case 2: return std::uniform_int_distribution<std::int64_t>(-(1LL << 40), 1LL << 40)(rng_);
      case 3:
        return json_safe ? (coin() ? (1LL << 53) : -(1LL << 53))
                         : std::uniform_int_distribution<std::int64_t>()(rng_);
      default: return 0;
    }
  }

  double real() {
    switch (uniform(0, 3)) {
      case 0: return std::uniform_real_distribution<double>(-5, 5)(rng_);
      case 1: return std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng_), uniform(-1000, 1000));
      case 2: return coin() ? 0.0 : -0.0;
      default: return static_cast<double>(uniform(-100, 100));
    }
  }

  Bytes bytes(int max_len = 24) {
    Bytes b(static_cast<std::size_t>(uniform(0, max_len)));
    for (auto& x : b) x = static_cast<std::uint8_t>(uniform(0, 255));
    return b;
  }

  /// Random payload tree of nesting depth at most `max_depth`.
  Value value(int max_depth, bool json_safe = true) {
    int pick = uniform(0, max_depth > 1 ? 7 : 5);
    switch (pick) {
      case 0: return Value();
      case 1: return Value(coin());
      case 2: return Value(integer(json_safe));
      case 3: return Value(real());
      case 4: return Value(text());
      case 5: return Value(bytes());
      case 6: {
        ValueList l;
        int n = uniform(0, 4);
        for (int i = 0; i < n; ++i) l.push_back(value(max_depth - 1, json_safe));
        return Value(std::move(l));
      }
      default: {
        ValueMap m;
        int n = uniform(0, 4);
        for (int i = 0; i < n; ++i) m[text(6)] = value(max_depth - 1, json_safe);
        return Value(std::move(m));
      }
    }
  }

  /// A deliberately deep chain, to exercise the nesting limits.
  Value deep(int depth) {
    Value v(text(3));
    for (int i = 1; i < depth; ++i) {
      if (coin()) {
        v = Value(ValueList{std::move(v)});
      } else {
        ValueMap m;
        m[text(3)] = std::move(v);
        v = Value(std::move(m));
      }
    }
    return v;
  }

  wire::WireFrame frame(bool json_safe = true) {
    using wire::Op;
    wire::WireFrame f;
    f.op = static_cast<Op>(uniform(0, 10));
    auto maybe = [&](auto make) -> decltype(std::optional(make())) {
      return coin(0.3) ? std::optional(make()) : std::nullopt;
    };
    auto payload = [&] { return coin(0.1) ? deep(uniform(1, 32)) : value(uniform(1, 6), json_safe); };
    f.id = maybe([&] { return text(8) + "x"; });
    f.type_name = maybe([&] { return text(); });
    f.text = maybe([&] { return text(); });
    f.token = maybe([&] { return text(); });
    f.throttle_rate_ms = maybe([&] { return static_cast<std::uint32_t>(uniform(0, 100000)); });
    f.queue_length = maybe([&] { return static_cast<std::uint32_t>(uniform(0, 1000)); });
    f.latched = maybe([&] { return coin(); });
    f.result = maybe([&] { return coin(); });
    f.encoding_hint = maybe([&] { return coin() ? wire::Encoding::json : wire::Encoding::cbor; });
    f.msg = maybe(payload);
    switch (f.op) {
      case Op::advertise:
        f.topic = name();
        f.type_name = text() + "t";
        break;
      case Op::unadvertise:
      case Op::subscribe:
      case Op::unsubscribe:
        f.topic = name();
        break;
      case Op::publish:
        f.topic = name();
        f.msg = payload();
        break;
      case Op::call_service:
        f.service = name();
        f.id = "c" + text(6);
        break;
      case Op::service_response:
        f.id = "r" + text(6);
        f.result = coin();
        break;
      case Op::advertise_service:
        f.service = name();
        f.type_name = text();
        f.response_type = text();
        break;
      case Op::unadvertise_service:
        f.service = name();
        break;
      case Op::status:
        f.level = std::vector<std::string>{"error", "warning", "info"}[uniform(0, 2)];
        f.text = text();
        break;
      case Op::hello: {
        f.versions = std::vector<std::uint32_t>{1};
        if (coin()) f.versions->push_back(static_cast<std::uint32_t>(uniform(2, 9)));
        f.encodings = std::vector<wire::Encoding>{wire::Encoding::cbor};
        if (coin()) f.encodings->push_back(wire::Encoding::json);
        break;
      }
    }
    return f;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace rap::testing
