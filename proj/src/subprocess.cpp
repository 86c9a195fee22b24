#include "physforge/util/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace physforge {

namespace {

void set_cloexec(int fd) {
  const int flags = fcntl(fd, F_GETFD);
  if (flags >= 0) fcntl(fd, F_SETFD, flags | FD_CLOEXEC);
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& cwd, double timeout_seconds) {
  ProcessResult result;
  if (argv.empty()) {
    result.spawn_failed = true;
    result.output = "empty command line";
    return result;
  }

  int out_pipe[2];   // child stdout+stderr -> parent
  int exec_pipe[2];  // closed on successful exec, carries errno otherwise
  if (pipe(out_pipe) != 0 || pipe(exec_pipe) != 0) {
    result.spawn_failed = true;
    result.output = std::string("pipe: ") + std::strerror(errno);
    return result;
  }
  set_cloexec(exec_pipe[1]);

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = fork();
  if (pid < 0) {
    result.spawn_failed = true;
    result.output = std::string("fork: ") + std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], exec_pipe[0], exec_pipe[1]})
      close(fd);
    return result;
  }

  if (pid == 0) {
    // Child. Own process group so a timeout kill reaps grandchildren too.
    setpgid(0, 0);
    close(out_pipe[0]);
    close(exec_pipe[0]);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(out_pipe[1], STDERR_FILENO);
    close(out_pipe[1]);
    if (!cwd.empty() && chdir(cwd.c_str()) != 0) {
      const int err = errno;
      (void)!write(exec_pipe[1], &err, sizeof err);
      _exit(127);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    const int err = errno;
    (void)!write(exec_pipe[1], &err, sizeof err);
    _exit(127);
  }

  // Parent.
  close(out_pipe[1]);
  close(exec_pipe[1]);

  int exec_errno = 0;
  {
    // Blocks until exec succeeds (EOF) or the child reports failure.
    const ssize_t n = read(exec_pipe[0], &exec_errno, sizeof exec_errno);
    if (n <= 0) exec_errno = 0;
  }
  close(exec_pipe[0]);

  if (exec_errno != 0) {
    close(out_pipe[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    result.spawn_failed = true;
    result.output =
        argv[0] + ": " + std::strerror(exec_errno);
    return result;
  }

  const auto deadline =
      start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                  std::chrono::duration<double>(timeout_seconds));
  bool killed = false;
  char buf[4096];
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    int wait_ms = -1;
    if (timeout_seconds > 0) {
      if (now >= deadline) {
        if (!killed) {
          kill(-pid, SIGKILL);
          killed = true;
        }
        wait_ms = 100;
      } else {
        wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                  now)
                .count() +
            1);
      }
    }
    struct pollfd pfd = {out_pipe[0], POLLIN, 0};
    const int rc = poll(&pfd, 1, wait_ms);
    if (rc > 0) {
      const ssize_t n = read(out_pipe[0], buf, sizeof buf);
      if (n > 0) {
        result.output.append(buf, static_cast<std::size_t>(n));
        continue;
      }
      break;  // EOF or error: child closed its end
    }
    if (rc == 0) continue;  // timed out polling; loop re-checks the deadline
    if (errno == EINTR) continue;
    break;
  }
  close(out_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  result.timed_out = killed;
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else {
    result.exit_code = -1;
  }
  return result;
}

}  // namespace physforge
