#pragma once

// SQLite-backed session store. Actions are appended in their own
// transaction before the in-memory state changes.

#include <sqlite3.h>

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fairdiv/service/session.hpp"

namespace fairdiv::service {

class SqliteStore : public SessionStore {
 public:
  explicit SqliteStore(const std::string& path) {
    if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
      const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      throw std::runtime_error("cannot open session store '" + path + "': " + msg);
    }
    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=NORMAL");
    exec("CREATE TABLE IF NOT EXISTS sessions (id TEXT PRIMARY KEY, created TEXT NOT NULL, config TEXT NOT NULL)");
    exec("CREATE TABLE IF NOT EXISTS actions (session TEXT NOT NULL, idx INTEGER NOT NULL, action TEXT NOT NULL, "
         "PRIMARY KEY (session, idx))");
  }
  ~SqliteStore() override { sqlite3_close(db_); }
  SqliteStore(const SqliteStore&) = delete;
  SqliteStore& operator=(const SqliteStore&) = delete;

  void save_session(const std::string& id, const json& config, const std::string& created) override {
    std::lock_guard lock(mu_);
    Statement st(db_, "INSERT INTO sessions (id, created, config) VALUES (?, ?, ?)");
    st.bind(1, id);
    st.bind(2, created);
    st.bind(3, config.dump());
    st.run();
  }

  void append_action(const std::string& id, std::size_t index, const json& action) override {
    std::lock_guard lock(mu_);
    Statement st(db_, "INSERT INTO actions (session, idx, action) VALUES (?, ?, ?)");
    st.bind(1, id);
    sqlite3_bind_int64(st.get(), 2, static_cast<sqlite3_int64>(index));
    st.bind(3, action.dump());
    st.run();
  }

  std::vector<Stored> load_all() override {
    std::lock_guard lock(mu_);
    std::vector<Stored> out;
    {
      Statement st(db_, "SELECT id, created, config FROM sessions ORDER BY rowid");
      while (st.step()) out.push_back({st.text(0), json::parse(st.text(2)), st.text(1), {}});
    }
    for (auto& s : out) {
      Statement st(db_, "SELECT action FROM actions WHERE session = ? ORDER BY idx");
      st.bind(1, s.id);
      while (st.step()) s.actions.push_back(json::parse(st.text(0)));
    }
    return out;
  }

 private:
  class Statement {
   public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
      if (sqlite3_prepare_v2(db, sql, -1, &st_, nullptr) != SQLITE_OK) {
        throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
      }
    }
    ~Statement() { sqlite3_finalize(st_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    sqlite3_stmt* get() { return st_; }
    void bind(int i, const std::string& v) { sqlite3_bind_text(st_, i, v.c_str(), -1, SQLITE_TRANSIENT); }
    void run() {
      if (sqlite3_step(st_) != SQLITE_DONE) throw std::runtime_error(std::string("sqlite: ") + sqlite3_errmsg(db_));
    }
    bool step() {
      const int rc = sqlite3_step(st_);
      if (rc == SQLITE_ROW) return true;
      if (rc != SQLITE_DONE) throw std::runtime_error(std::string("sqlite: ") + sqlite3_errmsg(db_));
      return false;
    }
    std::string text(int col) {
      const auto* p = sqlite3_column_text(st_, col);
      return p ? reinterpret_cast<const char*>(p) : "";
    }

   private:
    sqlite3* db_;
    sqlite3_stmt* st_ = nullptr;
  };

  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      const std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw std::runtime_error(std::string("sqlite: ") + msg);
    }
  }

  sqlite3* db_ = nullptr;
  std::mutex mu_;
};

}  // namespace fairdiv::service
