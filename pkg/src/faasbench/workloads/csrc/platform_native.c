/* POSIX host for the native (static binary) build. */
#define _GNU_SOURCE
#include <arpa/inet.h>
#include <errno.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <signal.h>
#include <stdlib.h>
#include <string.h>
#include <sys/socket.h>
#include <time.h>
#include <unistd.h>

#include "platform.h"

static int g_in_fd = 0;
static int g_out_fd = 1;
static int g_listen_fd = -1;

/* Socket transport accepts on first read, after READY has been written. */
static int accept_client(void) {
    int c;
    do {
        c = accept(g_listen_fd, 0, 0);
    } while (c < 0 && errno == EINTR);
    close(g_listen_fd);
    g_listen_fd = -1;
    if (c < 0) return -1;
    int one = 1;
    setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    g_in_fd = c;
    g_out_fd = c;
    return 0;
}

int64_t plat_clock_ns(void) {
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (int64_t)ts.tv_sec * 1000000000 + ts.tv_nsec;
}

int32_t plat_read(void *buf, int32_t n) {
    if (g_listen_fd >= 0 && accept_client() != 0) return -1;
    for (;;) {
        ssize_t r = read(g_in_fd, buf, (size_t)n);
        if (r < 0 && errno == EINTR) continue;
        return (int32_t)r;
    }
}

static int32_t write_fd(int fd, const void *buf, int32_t n) {
    for (;;) {
        ssize_t w = write(fd, buf, (size_t)n);
        if (w < 0 && errno == EINTR) continue;
        return (int32_t)w;
    }
}

int32_t plat_write(const void *buf, int32_t n) { return write_fd(g_out_fd, buf, n); }

int32_t plat_ready(const void *line, int32_t n) {
    int32_t done = 0;
    while (done < n) {
        int32_t w = write_fd(1, (const char *)line + done, n - done);
        if (w <= 0) return -1;
        done += w;
    }
    return done;
}

int32_t plat_env(const char *name, int32_t name_len, char *dst, int32_t cap) {
    char key[128];
    if (name_len <= 0 || name_len >= (int32_t)sizeof key) return -1;
    memcpy(key, name, (size_t)name_len);
    key[name_len] = 0;
    const char *v = getenv(key);
    if (!v) return -1;
    int32_t n = (int32_t)strlen(v);
    if (n > cap) n = cap;
    memcpy(dst, v, (size_t)n);
    return n;
}

int32_t plat_sock_connect(const char *host, int32_t host_len, int32_t port) {
    char h[64];
    if (host_len <= 0 || host_len >= (int32_t)sizeof h) return -1;
    memcpy(h, host, (size_t)host_len);
    h[host_len] = 0;
    if (strcmp(h, "localhost") == 0) strcpy(h, "127.0.0.1");
    struct sockaddr_in addr;
    memset(&addr, 0, sizeof addr);
    addr.sin_family = AF_INET;
    addr.sin_port = htons((uint16_t)port);
    if (inet_pton(AF_INET, h, &addr.sin_addr) != 1) return -1;
    int fd = socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (connect(fd, (struct sockaddr *)&addr, sizeof addr) != 0) {
        close(fd);
        return -1;
    }
    return fd;
}

int32_t plat_sock_send(int32_t h, const void *buf, int32_t n) {
    for (;;) {
        ssize_t w = send(h, buf, (size_t)n, MSG_NOSIGNAL);
        if (w < 0 && errno == EINTR) continue;
        return (int32_t)w;
    }
}

int32_t plat_sock_recv(int32_t h, void *buf, int32_t n) {
    for (;;) {
        ssize_t r = recv(h, buf, (size_t)n, 0);
        if (r < 0 && errno == EINTR) continue;
        return (int32_t)r;
    }
}

int32_t plat_sock_close(int32_t h) { return close(h); }

/* LUMOS_TRANSPORT=socket:<port> listens on loopback and serves one connection. */
static int setup_transport(int *listen_fd) {
    const char *t = getenv("LUMOS_TRANSPORT");
    *listen_fd = -1;
    if (!t || strcmp(t, "stdio") == 0) return 0;
    if (strncmp(t, "socket:", 7) != 0) return -1;
    int port = atoi(t + 7);
    if (port <= 0 || port > 65535) return -1;
    int fd = socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    struct sockaddr_in addr;
    memset(&addr, 0, sizeof addr);
    addr.sin_family = AF_INET;
    addr.sin_port = htons((uint16_t)port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (bind(fd, (struct sockaddr *)&addr, sizeof addr) != 0 || listen(fd, 1) != 0) {
        close(fd);
        return -1;
    }
    *listen_fd = fd;
    return 0;
}

int main(void) {
    signal(SIGPIPE, SIG_IGN);
    if (setup_transport(&g_listen_fd) != 0) {
        static const char msg[] = "invalid LUMOS_TRANSPORT\n";
        write_fd(2, msg, (int32_t)(sizeof msg - 1));
        return 2;
    }
    return faas_serve();
}
