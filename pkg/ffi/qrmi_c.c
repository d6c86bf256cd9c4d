/*
 * qrmi_c.c - C ABI over the Python library via an embedded interpreter.
 *
 * Marshalling contract: every host function in qrmi._capi takes primitives
 * and returns a (status_code, payload_string) tuple, so this file contains
 * no knowledge of Python exception types. The GIL is taken per call;
 * blocking waits inside the library release it, so concurrent native
 * threads make progress.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "qrmi.h"

struct qrmi_handle {
    long session_id;
    int closed;
};

static __thread char g_last_error[2048];

static void set_error(const char *message)
{
    if (!message)
        message = "unknown error";
    snprintf(g_last_error, sizeof(g_last_error), "%s", message);
}

const char *qrmi_last_error(void)
{
    return g_last_error;
}

static void python_error_to_last(void)
{
    PyObject *type = NULL, *value = NULL, *traceback = NULL;
    PyErr_Fetch(&type, &value, &traceback);
    if (value) {
        PyObject *text = PyObject_Str(value);
        if (text) {
            const char *utf8 = PyUnicode_AsUTF8(text);
            set_error(utf8 ? utf8 : "unprintable python error");
            Py_DECREF(text);
        } else {
            set_error("unprintable python error");
        }
    } else {
        set_error("unknown python error");
    }
    Py_XDECREF(type);
    Py_XDECREF(value);
    Py_XDECREF(traceback);
}

static void ensure_python(void)
{
    if (!Py_IsInitialized()) {
        Py_InitializeEx(0);
        /* Release the GIL owned by the initializing thread so that
         * PyGILState_Ensure works from any native thread afterwards. */
        PyEval_SaveThread();
    }
}

/* Call qrmi._capi.<name>(*args); args is a new reference consumed here.
 * On QRMI_OK, *payload_out receives a new unicode reference. Caller holds
 * the GIL. */
static int invoke(const char *name, PyObject *args, PyObject **payload_out)
{
    if (!args) {
        python_error_to_last();
        return QRMI_E_RUNTIME;
    }
    PyObject *module = PyImport_ImportModule("qrmi._capi");
    if (!module) {
        python_error_to_last();
        Py_DECREF(args);
        return QRMI_E_RUNTIME;
    }
    PyObject *fn = PyObject_GetAttrString(module, name);
    Py_DECREF(module);
    if (!fn) {
        python_error_to_last();
        Py_DECREF(args);
        return QRMI_E_RUNTIME;
    }
    PyObject *result = PyObject_CallObject(fn, args);
    Py_DECREF(fn);
    Py_DECREF(args);
    if (!result) {
        python_error_to_last();
        return QRMI_E_RUNTIME;
    }
    if (!PyTuple_Check(result) || PyTuple_Size(result) != 2) {
        set_error("host returned a malformed response");
        Py_DECREF(result);
        return QRMI_E_RUNTIME;
    }
    long code = PyLong_AsLong(PyTuple_GetItem(result, 0));
    PyObject *payload = PyTuple_GetItem(result, 1); /* borrowed */
    if (code != 0) {
        const char *utf8 = PyUnicode_AsUTF8(payload);
        set_error(utf8 ? utf8 : "error without message");
        Py_DECREF(result);
        return (int)code;
    }
    if (payload_out) {
        Py_INCREF(payload);
        *payload_out = payload;
    }
    Py_DECREF(result);
    return QRMI_OK;
}

static int copy_out(PyObject *payload, char *buf, size_t buf_len, size_t *out_len)
{
    Py_ssize_t size = 0;
    const char *utf8 = PyUnicode_AsUTF8AndSize(payload, &size);
    if (!utf8) {
        python_error_to_last();
        return QRMI_E_RUNTIME;
    }
    size_t needed = (size_t)size + 1;
    if (out_len)
        *out_len = needed;
    if (!buf || buf_len < needed) {
        set_error("output buffer too small");
        return QRMI_E_BUFFER_TOO_SMALL;
    }
    memcpy(buf, utf8, needed);
    return QRMI_OK;
}

static int check_handle(qrmi_handle *handle)
{
    if (!handle || handle->closed) {
        set_error("handle is NULL or closed");
        return QRMI_E_BAD_ARGUMENT;
    }
    return QRMI_OK;
}

qrmi_handle *qrmi_open(const char *config_path)
{
    if (!config_path) {
        set_error("config_path is NULL");
        return NULL;
    }
    ensure_python();
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *payload = NULL;
    int code = invoke("open_session", Py_BuildValue("(s)", config_path), &payload);
    qrmi_handle *handle = NULL;
    if (code == QRMI_OK) {
        const char *text = PyUnicode_AsUTF8(payload);
        handle = calloc(1, sizeof(*handle));
        if (handle && text) {
            handle->session_id = strtol(text, NULL, 10);
            set_error("");
        } else {
            set_error("allocation failed");
            free(handle);
            handle = NULL;
        }
        Py_DECREF(payload);
    }
    PyGILState_Release(gil);
    return handle;
}

void qrmi_close(qrmi_handle *handle)
{
    if (!handle || handle->closed)
        return; /* double close is a safe no-op */
    PyGILState_STATE gil = PyGILState_Ensure();
    invoke("close_session", Py_BuildValue("(l)", handle->session_id), NULL);
    PyGILState_Release(gil);
    handle->closed = 1;
    /* The struct is intentionally retained so a second close cannot fault. */
}

int qrmi_is_accessible(qrmi_handle *handle, const char *resource_id, int *out_accessible)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!resource_id || !out_accessible) {
        set_error("resource_id/out_accessible is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *payload = NULL;
    int code = invoke("is_accessible", Py_BuildValue("(ls)", handle->session_id, resource_id), &payload);
    if (code == QRMI_OK) {
        const char *text = PyUnicode_AsUTF8(payload);
        *out_accessible = (text && text[0] == '1') ? 1 : 0;
        Py_DECREF(payload);
    }
    PyGILState_Release(gil);
    return code;
}

int qrmi_acquire(qrmi_handle *handle, const char *resource_id, double timeout_ms,
                 char *token_buf, size_t token_buf_len, size_t *out_len)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!resource_id) {
        set_error("resource_id is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *payload = NULL;
    int code = invoke("acquire", Py_BuildValue("(lsd)", handle->session_id, resource_id, timeout_ms),
                      &payload);
    if (code == QRMI_OK) {
        code = copy_out(payload, token_buf, token_buf_len, out_len);
        if (code == QRMI_E_BUFFER_TOO_SMALL) {
            /* Roll back so the slot is not leaked on a caller bug. */
            const char *token = PyUnicode_AsUTF8(payload);
            if (token)
                invoke("release", Py_BuildValue("(ls)", handle->session_id, token), NULL);
            set_error("token buffer too small (slot released)");
        }
        Py_DECREF(payload);
    }
    PyGILState_Release(gil);
    return code;
}

int qrmi_release(qrmi_handle *handle, const char *token)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!token) {
        set_error("token is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    int code = invoke("release", Py_BuildValue("(ls)", handle->session_id, token), NULL);
    PyGILState_Release(gil);
    return code;
}

int qrmi_task_start(qrmi_handle *handle, const char *token, const char *format,
                    const unsigned char *body, size_t body_len, int shots,
                    char *task_id_buf, size_t task_id_buf_len, size_t *out_len)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!token || !format || (!body && body_len > 0)) {
        set_error("token/format/body is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *payload = NULL;
    int code = invoke("task_start",
                      Py_BuildValue("(lssy#i)", handle->session_id, token, format,
                                    (const char *)body, (Py_ssize_t)body_len, shots),
                      &payload);
    if (code == QRMI_OK) {
        code = copy_out(payload, task_id_buf, task_id_buf_len, out_len);
        if (code == QRMI_E_BUFFER_TOO_SMALL) {
            const char *task_id = PyUnicode_AsUTF8(payload);
            if (task_id)
                invoke("task_stop", Py_BuildValue("(ls)", handle->session_id, task_id), NULL);
            set_error("task id buffer too small (task stopped)");
        }
        Py_DECREF(payload);
    }
    PyGILState_Release(gil);
    return code;
}

int qrmi_task_stop(qrmi_handle *handle, const char *task_id)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!task_id) {
        set_error("task_id is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    int code = invoke("task_stop", Py_BuildValue("(ls)", handle->session_id, task_id), NULL);
    PyGILState_Release(gil);
    return code;
}

/* Shared body for the four string-returning id-keyed queries. */
static int string_query(qrmi_handle *handle, const char *host_fn, const char *key,
                        char *buf, size_t buf_len, size_t *out_len)
{
    int bad = check_handle(handle);
    if (bad)
        return bad;
    if (!key) {
        set_error("argument is NULL");
        return QRMI_E_BAD_ARGUMENT;
    }
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *payload = NULL;
    int code = invoke(host_fn, Py_BuildValue("(ls)", handle->session_id, key), &payload);
    if (code == QRMI_OK) {
        code = copy_out(payload, buf, buf_len, out_len);
        Py_DECREF(payload);
    }
    PyGILState_Release(gil);
    return code;
}

int qrmi_task_status(qrmi_handle *handle, const char *task_id,
                     char *status_buf, size_t status_buf_len, size_t *out_len)
{
    return string_query(handle, "task_status", task_id, status_buf, status_buf_len, out_len);
}

int qrmi_task_result(qrmi_handle *handle, const char *task_id,
                     char *json_buf, size_t json_buf_len, size_t *out_len)
{
    return string_query(handle, "task_result", task_id, json_buf, json_buf_len, out_len);
}

int qrmi_target(qrmi_handle *handle, const char *resource_id,
                char *json_buf, size_t json_buf_len, size_t *out_len)
{
    return string_query(handle, "target", resource_id, json_buf, json_buf_len, out_len);
}

int qrmi_metadata(qrmi_handle *handle, const char *resource_id,
                  char *json_buf, size_t json_buf_len, size_t *out_len)
{
    return string_query(handle, "metadata", resource_id, json_buf, json_buf_len, out_len);
}
