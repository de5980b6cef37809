#include "cellgan/transport.hpp"

namespace cellgan::transport {

void Mailbox::push(Message msg) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    auto& q = is_control(msg.tag) ? control_ : data_;
    q.push_back(Entry{next_seq_++, std::move(msg)});
  }
  cv_.notify_all();
}

std::optional<Message> Mailbox::pop_locked(Plane plane) {
  std::deque<Entry>* q = nullptr;
  switch (plane) {
    case Plane::Control:
      q = &control_;
      break;
    case Plane::Data:
      q = &data_;
      break;
    case Plane::Any:
      if (control_.empty()) {
        q = &data_;
      } else if (data_.empty()) {
        q = &control_;
      } else {
        q = control_.front().seq < data_.front().seq ? &control_ : &data_;
      }
      break;
  }
  if (q->empty()) return std::nullopt;
  Message m = std::move(q->front().msg);
  q->pop_front();
  return m;
}

std::optional<Message> Mailbox::recv(Clock::duration timeout, Plane plane) {
  std::unique_lock lock(mu_);
  const auto deadline = Clock::now() + timeout;
  while (true) {
    if (auto m = pop_locked(plane)) return m;
    if (closed_) return std::nullopt;
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) return pop_locked(plane);
  }
}

void Mailbox::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Mailbox::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::size_t Mailbox::size(Plane plane) const {
  std::lock_guard lock(mu_);
  switch (plane) {
    case Plane::Control:
      return control_.size();
    case Plane::Data:
      return data_.size();
    case Plane::Any:
      break;
  }
  return control_.size() + data_.size();
}

void Transport::check_route(int to) const {
  if (to < 0 || to >= world_size())
    throw RoutingError("rank " + std::to_string(to) + " outside world of size " + std::to_string(world_size()));
}

}  // namespace cellgan::transport
