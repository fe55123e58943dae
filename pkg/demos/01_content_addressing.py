# %% [markdown]
# Content addressing: store a file, get back its content identifier, and see
# what happens when a single byte changes.

# %%
from lienpay.cas import BlockStore
from lienpay.errors import IntegrityViolation

store = BlockStore(chunk_size=1024)
model = b"IfcWall #1 ... " * 500
cid = store.put(model)
print("as-built model", cid.text, f"({len(store)} blocks)")

# %% Anyone uploading the same bytes gets the same identifier.
print("second uploader", BlockStore(chunk_size=1024).put(model) == cid)

# %% An edited model is a different object.
edited = model.replace(b"#1", b"#2", 1)
print("edited model  ", store.put(edited).text)
print("verify original against edit:", store.verify(cid, edited))

# %% Tampering with a stored block is caught on read.
victim = next(iter(store._blocks))
store._blocks[victim] = store._blocks[victim][:-1] + b"?"
try:
    store.get(cid)
except IntegrityViolation as exc:
    print("tamper detected:", exc)
